#include "encattack/theory.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <string>

#include "encattack/error.hpp"

namespace encattack {

FiniteDomain FiniteDomain::uniform(std::size_t n) {
  FiniteDomain d;
  d.instances.resize(n);
  std::iota(d.instances.begin(), d.instances.end(), std::uint64_t{0});
  d.weights.assign(n, n ? 1.0 / static_cast<double>(n) : 0.0);
  return d;
}

void FiniteDomain::validate() const {
  require(!instances.empty(), ErrorKind::validation, "domain is empty");
  require(weights.size() == instances.size(), ErrorKind::validation, "one weight per domain point");
  require(std::set<std::uint64_t>(instances.begin(), instances.end()).size() == instances.size(),
          ErrorKind::validation, "domain points must be distinct");
  double sum = 0.0;
  for (const double w : weights) {
    require(w >= 0.0 && std::isfinite(w), ErrorKind::validation, "domain weights must be nonnegative");
    sum += w;
  }
  require(std::abs(sum - 1.0) <= 1e-12, ErrorKind::validation, "domain weights must sum to 1");
}

std::size_t FiniteDomain::sample(Rng& rng) const {
  double u = rng.uniform();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return i;
    u -= weights[i];
  }
  return weights.size() - 1;
}

std::vector<std::size_t> Concept::members(int label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == label) out.push_back(i);
  }
  return out;
}

std::size_t Concept::class_rank(std::size_t x) const {
  require(x < labels.size(), ErrorKind::validation, "point " + std::to_string(x) + " is outside the domain");
  std::size_t rank = 0;
  for (std::size_t i = 0; i < x; ++i) rank += labels[i] == labels[x] ? 1 : 0;
  return rank;
}

void Concept::require_both_classes() const {
  const auto ones = std::count(labels.begin(), labels.end(), std::uint8_t{1});
  require(ones > 0 && static_cast<std::size_t>(ones) < labels.size(), ErrorKind::validation,
          "concept needs both labels present");
}

Concept threshold_concept(std::size_t n, std::size_t threshold) {
  Concept c;
  c.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) c.labels[i] = i >= threshold ? 1 : 0;
  return c;
}

IdealKey sample_ideal_key(const Concept& c, Rng& rng) {
  return {Permutation::random(c.members(0).size(), rng), Permutation::random(c.members(1).size(), rng)};
}

std::vector<IdealKey> enumerate_ideal_keys(const Concept& c) {
  const std::size_t n0 = c.members(0).size();
  const std::size_t n1 = c.members(1).size();
  auto factorial = [](std::size_t n) {
    double f = 1.0;
    for (std::size_t i = 2; i <= n; ++i) f *= static_cast<double>(i);
    return f;
  };
  require(factorial(n0) * factorial(n1) <= 1e6, ErrorKind::size, "too many ideal keys to enumerate");
  auto all_perms = [](std::size_t n) {
    std::vector<Permutation> out;
    std::vector<std::size_t> p(n);
    std::iota(p.begin(), p.end(), std::size_t{0});
    do {
      out.push_back(Permutation::from_indices(p));
    } while (std::next_permutation(p.begin(), p.end()));
    return out;
  };
  std::vector<IdealKey> keys;
  for (const auto& a : all_perms(n0)) {
    for (const auto& b : all_perms(n1)) keys.push_back({a, b});
  }
  return keys;
}

namespace {

// Class membership and ranks, computed once per concept.
struct ClassIndex {
  std::vector<std::size_t> class0, class1, rank;
  std::vector<std::uint8_t> labels;

  explicit ClassIndex(const Concept& c) : class0(c.members(0)), class1(c.members(1)), labels(c.labels) {
    rank.resize(c.size());
    for (std::size_t r = 0; r < class0.size(); ++r) rank[class0[r]] = r;
    for (std::size_t r = 0; r < class1.size(); ++r) rank[class1[r]] = r;
  }

  std::size_t encode(const IdealKey& key, std::size_t x) const {
    require(x < labels.size(), ErrorKind::validation, "point " + std::to_string(x) + " is outside the domain");
    return labels[x] ? class1[key.class1[rank[x]]] : class0[key.class0[rank[x]]];
  }
};

}  // namespace

std::size_t ideal_encode(const Concept& c, const IdealKey& key, std::size_t x) {
  require(x < c.size(), ErrorKind::validation, "point " + std::to_string(x) + " is outside the domain");
  return ClassIndex(c).encode(key, x);
}

KeyedEncoder ideal_encoder(const Concept& c) {
  auto index = std::make_shared<const ClassIndex>(c);
  const Concept concept_copy = c;
  return [index, concept_copy](std::uint64_t key_seed) -> EncodeFn {
    Rng rng(key_seed);
    auto key = std::make_shared<const IdealKey>(sample_ideal_key(concept_copy, rng));
    return [index, key](std::size_t x) { return Encoding{static_cast<std::int64_t>(index->encode(*key, x))}; };
  };
}

KeyedEncoder identity_encoder() {
  return [](std::uint64_t) -> EncodeFn { return [](std::size_t x) { return Encoding{static_cast<std::int64_t>(x)}; }; };
}

KeyedEncoder rank_leaking_encoder(const Concept& c) {
  auto index = std::make_shared<const ClassIndex>(c);
  const Concept concept_copy = c;
  return [index, concept_copy](std::uint64_t key_seed) -> EncodeFn {
    Rng rng(key_seed);
    auto key = std::make_shared<const IdealKey>(sample_ideal_key(concept_copy, rng));
    return [index, key](std::size_t x) {
      return Encoding{static_cast<std::int64_t>(index->encode(*key, x)), static_cast<std::int64_t>(index->rank[x])};
    };
  };
}

WeakIdealCheck check_weakly_ideal(const Concept& c, std::size_t key_count,
                                  const std::function<std::size_t(std::size_t, std::size_t)>& encode) {
  WeakIdealCheck out;
  out.keys = key_count;
  out.label_preserving = true;
  std::vector<std::vector<std::size_t>> hist(c.size(), std::vector<std::size_t>(c.size(), 0));
  for (std::size_t x = 0; x < c.size(); ++x) {
    for (std::size_t k = 0; k < key_count; ++k) {
      const std::size_t y = encode(x, k);
      require(y < c.size(), ErrorKind::validation, "encoding left the domain");
      out.label_preserving = out.label_preserving && c.labels[y] == c.labels[x];
      ++hist[x][y];
    }
  }
  out.distribution_identical = true;
  for (const int label : {0, 1}) {
    const auto members = c.members(label);
    for (const std::size_t x : members) {
      out.distribution_identical = out.distribution_identical && hist[x] == hist[members.front()];
    }
  }
  return out;
}

WeakIdealCheck check_weakly_ideal(const Concept& c) {
  const auto keys = enumerate_ideal_keys(c);
  const ClassIndex index(c);
  return check_weakly_ideal(c, keys.size(), [&](std::size_t x, std::size_t k) { return index.encode(keys[k], x); });
}

Encoding EncodingOracle::query(std::size_t x) {
  if (x == x0_ || x == x1_) {
    ++violations_;
    fail(ErrorKind::protocol, "oracle refused a query on challenge point " + std::to_string(x));
  }
  ++queries_;
  return encode_(x);
}

namespace {

std::pair<std::size_t, std::size_t> checked_proposal(const Concept& c, std::pair<std::size_t, std::size_t> p) {
  require(p.first < c.size() && p.second < c.size(), ErrorKind::validation, "adversary proposed a point outside the domain");
  require(p.first != p.second, ErrorKind::validation, "adversary proposed the same point twice");
  require(c.labels[p.first] == c.labels[p.second], ErrorKind::validation,
          "adversary proposed points with different labels");
  return p;
}

template <typename Decide>
AdvantageEstimate run_game(const KeyedEncoder& encoder, const Concept& c,
                           const std::function<std::pair<std::size_t, std::size_t>(Rng&)>& propose,
                           std::size_t trials, std::uint64_t seed, Decide decide) {
  require(trials > 0, ErrorKind::validation, "advantage estimation needs at least one trial");
  AdvantageEstimate est;
  est.trials = trials;
  for (std::size_t t = 0; t < trials; ++t) {
    Rng rng(derive_seed(seed, t));
    const auto [x0, x1] = checked_proposal(c, propose(rng));
    const int b = static_cast<int>(rng.below(2));
    const EncodeFn enc = encoder(rng.next_u64());
    const Encoding challenge = enc(b ? x1 : x0);
    const int guess = decide(enc, challenge, x0, x1, rng);
    est.wins += guess == b ? 1 : 0;
  }
  const double p = static_cast<double>(est.wins) / static_cast<double>(trials);
  est.advantage = p - 0.5;
  est.standard_error = std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
  return est;
}

}  // namespace

AdvantageEstimate estimate_nia_advantage(const KeyedEncoder& encoder, const Concept& c, const NiaAdversary& adv,
                                         std::size_t trials, std::uint64_t seed) {
  return run_game(encoder, c, adv.propose, trials, seed,
                  [&](const EncodeFn&, const Encoding& y, std::size_t x0, std::size_t x1, Rng& rng) {
                    return adv.decide(y, x0, x1, rng);
                  });
}

AdvantageEstimate estimate_cia_advantage(const KeyedEncoder& encoder, const Concept& c, const CiaAdversary& adv,
                                         std::size_t trials, std::uint64_t seed) {
  return run_game(encoder, c, adv.propose, trials, seed,
                  [&](const EncodeFn& enc, const Encoding& y, std::size_t x0, std::size_t x1, Rng& rng) {
                    EncodingOracle oracle(enc, x0, x1);
                    return adv.decide(y, x0, x1, oracle, rng);
                  });
}

std::function<std::pair<std::size_t, std::size_t>(Rng&)> random_same_label_pair(const Concept& c) {
  c.require_both_classes();
  auto classes = std::make_shared<const std::array<std::vector<std::size_t>, 2>>(
      std::array<std::vector<std::size_t>, 2>{c.members(0), c.members(1)});
  require((*classes)[0].size() >= 2 || (*classes)[1].size() >= 2, ErrorKind::validation,
          "no class has two points to propose");
  return [classes](Rng& rng) {
    while (true) {
      const auto& cls = (*classes)[rng.below(2)];
      if (cls.size() < 2) continue;
      const std::size_t a = rng.below(cls.size());
      std::size_t b = rng.below(cls.size() - 1);
      if (b >= a) ++b;
      return std::pair{cls[a], cls[b]};
    }
  };
}

NiaAdversary nearest_instance_adversary(const Concept& c) {
  return {random_same_label_pair(c), [](const Encoding& y, std::size_t x0, std::size_t x1, Rng& rng) {
            const auto v = y.at(0);
            const auto d0 = std::abs(v - static_cast<std::int64_t>(x0));
            const auto d1 = std::abs(v - static_cast<std::int64_t>(x1));
            if (d0 == d1) return static_cast<int>(rng.below(2));
            return d1 < d0 ? 1 : 0;
          }};
}

NiaAdversary equality_adversary(const Concept& c) {
  return {random_same_label_pair(c), [](const Encoding& y, std::size_t, std::size_t x1, Rng&) {
            return y.at(0) == static_cast<std::int64_t>(x1) ? 1 : 0;
          }};
}

NiaAdversary coin_flip_adversary(const Concept& c) {
  return {random_same_label_pair(c),
          [](const Encoding&, std::size_t, std::size_t, Rng& rng) { return static_cast<int>(rng.below(2)); }};
}

namespace {

std::set<std::int64_t> query_all_others(EncodingOracle& oracle, std::size_t n, std::size_t x0, std::size_t x1) {
  std::set<std::int64_t> seen;
  for (std::size_t z = 0; z < n; ++z) {
    if (z != x0 && z != x1) seen.insert(oracle.query(z).at(0));
  }
  return seen;
}

}  // namespace

CiaAdversary exhaustive_query_adversary(const Concept& c) {
  const std::size_t n = c.size();
  return {random_same_label_pair(c),
          [n](const Encoding& y, std::size_t x0, std::size_t x1, EncodingOracle& oracle, Rng& rng) {
            const auto seen = query_all_others(oracle, n, x0, x1);
            const auto v = y.at(0);
            if (!seen.contains(v)) {
              if (v == static_cast<std::int64_t>(x1)) return 1;
              if (v == static_cast<std::int64_t>(x0)) return 0;
            }
            return static_cast<int>(rng.below(2));
          }};
}

CiaAdversary rank_reading_adversary(const Concept& c) {
  auto index = std::make_shared<const ClassIndex>(c);
  const std::size_t n = c.size();
  return {random_same_label_pair(c),
          [index, n](const Encoding& y, std::size_t x0, std::size_t x1, EncodingOracle& oracle, Rng& rng) {
            query_all_others(oracle, n, x0, x1);
            if (y.size() > 1) {
              if (y[1] == static_cast<std::int64_t>(index->rank[x1])) return 1;
              if (y[1] == static_cast<std::int64_t>(index->rank[x0])) return 0;
            }
            return static_cast<int>(rng.below(2));
          }};
}

Learner frequency_table_learner() {
  return [](const std::vector<LabeledEncoding>& data) -> Classifier {
    auto table = std::make_shared<std::map<std::int64_t, std::array<std::size_t, 2>>>();
    for (const auto& ex : data) ++(*table)[ex.encoding.at(0)][ex.label ? 1 : 0];
    return [table](const Encoding& e) {
      if (table->empty()) return 0;
      const auto v = e.at(0);
      auto it = table->lower_bound(v);
      if (it == table->end() || it->first != v) {
        // Nearest seen entry; the smaller one on ties.
        if (it == table->end()) {
          it = std::prev(it);
        } else if (it != table->begin()) {
          const auto below = std::prev(it);
          if (v - below->first <= it->first - v) it = below;
        }
      }
      return it->second[1] > it->second[0] ? 1 : 0;
    };
  };
}

std::size_t chernoff_votes(double epsilon, double tau) {
  require(epsilon > 0.0 && epsilon <= 0.5 && tau > 0.0 && tau < 1.0, ErrorKind::configuration,
          "chernoff_votes needs 0 < epsilon <= 1/2 and 0 < tau < 1");
  return static_cast<std::size_t>(std::ceil(std::log(1.0 / tau) / (2.0 * epsilon * epsilon)));
}

int PredExtractor::predict(std::size_t x, Rng& rng) const {
  std::size_t ones = 0;
  for (std::size_t t = 0; t < votes; ++t) ones += base(encoder(rng.next_u64())(x)) == 1 ? 1 : 0;
  return 2 * ones > votes ? 1 : 0;
}

PredExtractor pred_extractor(const Learner& learner, const KeyedEncoder& encoder, std::size_t x0, std::size_t x1,
                             const PredExtractorConfig& cfg, std::uint64_t seed) {
  require(cfg.m > 0 && cfg.votes > 0 && cfg.retry_budget > 0 && cfg.heldout > 0, ErrorKind::configuration,
          "pred_extractor needs positive m, votes, retry budget and held-out size");
  require(cfg.p >= 0.0 && cfg.p <= 1.0 && cfg.epsilon > 0.0 && cfg.epsilon <= 0.5, ErrorKind::configuration,
          "pred_extractor needs p in [0, 1] and epsilon in (0, 1/2]");
  const Rng root(seed);
  double best = 0.0;
  for (std::size_t attempt = 0; attempt < cfg.retry_budget; ++attempt) {
    Rng rng = root.split(attempt);
    const std::size_t negatives = rng.binomial(cfg.m, 1.0 - cfg.p);
    std::vector<LabeledEncoding> data;
    data.reserve(cfg.m);
    for (std::size_t i = 0; i < cfg.m; ++i) {
      const bool positive = i >= negatives;
      data.push_back({encoder(rng.next_u64())(positive ? x1 : x0), positive ? 1 : 0});
    }
    Classifier h = learner(data);
    std::size_t right0 = 0, right1 = 0;
    for (std::size_t i = 0; i < cfg.heldout; ++i) {
      right0 += h(encoder(rng.next_u64())(x0)) == 0 ? 1 : 0;
      right1 += h(encoder(rng.next_u64())(x1)) == 1 ? 1 : 0;
    }
    const double acc = 0.5 * static_cast<double>(right0 + right1) / static_cast<double>(cfg.heldout);
    best = std::max(best, acc);
    if (acc >= 0.5 + cfg.epsilon) return {std::move(h), encoder, cfg.votes, attempt + 1, acc};
  }
  fail(ErrorKind::extraction, "learner never reached balanced accuracy " + std::to_string(0.5 + cfg.epsilon) +
                                  " in " + std::to_string(cfg.retry_budget) + " attempts (best " +
                                  std::to_string(best) + ", m=" + std::to_string(cfg.m) + ")");
}

double measure_risk(const PredExtractor& h, const Concept& c, std::span<const double> query_weights,
                    std::size_t queries, std::uint64_t seed) {
  require(query_weights.size() == c.size(), ErrorKind::validation, "one query weight per domain point");
  require(queries > 0, ErrorKind::validation, "risk needs at least one query");
  FiniteDomain d = FiniteDomain::uniform(c.size());
  d.weights.assign(query_weights.begin(), query_weights.end());
  d.validate();
  Rng rng(seed);
  std::size_t errors = 0;
  for (std::size_t q = 0; q < queries; ++q) {
    const std::size_t x = d.sample(rng);
    errors += h.predict(x, rng) != c.labels[x] ? 1 : 0;
  }
  return static_cast<double>(errors) / static_cast<double>(queries);
}

}  // namespace encattack
