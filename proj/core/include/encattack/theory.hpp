#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "encattack/permutation.hpp"
#include "encattack/rng.hpp"

namespace encattack {

/// Distinct points with sampling weights. Points are referred to by index.
struct FiniteDomain {
  std::vector<std::uint64_t> instances;
  std::vector<double> weights;

  static FiniteDomain uniform(std::size_t n);

  std::size_t size() const noexcept { return instances.size(); }
  /// Validation error on duplicates, negative weights or a sum off 1 by more than 1e-12.
  void validate() const;
  std::size_t sample(Rng& rng) const;
};

/// One bit per domain point.
struct Concept {
  std::vector<std::uint8_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  /// Indices with the given label, ascending.
  std::vector<std::size_t> members(int label) const;
  /// Position of x among the members of its class.
  std::size_t class_rank(std::size_t x) const;
  /// Validation error unless both classes are nonempty.
  void require_both_classes() const;
};

/// Label 1 exactly for indices >= threshold.
Concept threshold_concept(std::size_t n, std::size_t threshold);

/// One uniform permutation per label class, acting on that class's members
/// in ascending order.
struct IdealKey {
  Permutation class0;
  Permutation class1;
};

IdealKey sample_ideal_key(const Concept& c, Rng& rng);

/// Every key; the count is |class0|! * |class1|!.
std::vector<IdealKey> enumerate_ideal_keys(const Concept& c);

/// Maps x to another point of its own class. Validation error when x is
/// outside the domain.
std::size_t ideal_encode(const Concept& c, const IdealKey& key, std::size_t x);

using Encoding = std::vector<std::int64_t>;
using EncodeFn = std::function<Encoding(std::size_t)>;
/// A keyed scheme: the key is drawn from the seed, and the returned function
/// encodes under that one key.
using KeyedEncoder = std::function<EncodeFn(std::uint64_t key_seed)>;

/// Encoding {ideal_encode(x)}.
KeyedEncoder ideal_encoder(const Concept& c);
/// Encoding {x}, ignoring the key.
KeyedEncoder identity_encoder();
/// Encoding {ideal_encode(x), class_rank(x)}.
KeyedEncoder rank_leaking_encoder(const Concept& c);

struct WeakIdealCheck {
  bool label_preserving = false;
  bool distribution_identical = false;  // equal output histograms within each class
  std::size_t keys = 0;
};

/// Exhaustive check over `key_count` equally likely keys; encode(x, key)
/// returns a domain index.
WeakIdealCheck check_weakly_ideal(const Concept& c, std::size_t key_count,
                                  const std::function<std::size_t(std::size_t, std::size_t)>& encode);

/// Enumerates every ideal key.
WeakIdealCheck check_weakly_ideal(const Concept& c);

/// Encodes on behalf of the challenger and refuses the two challenge points.
class EncodingOracle {
 public:
  EncodingOracle(EncodeFn encode, std::size_t x0, std::size_t x1)
      : encode_(std::move(encode)), x0_(x0), x1_(x1) {}

  /// Protocol error, recorded in violations(), for x0 or x1.
  Encoding query(std::size_t x);

  std::size_t queries() const noexcept { return queries_; }
  std::size_t violations() const noexcept { return violations_; }

 private:
  EncodeFn encode_;
  std::size_t x0_;
  std::size_t x1_;
  std::size_t queries_ = 0;
  std::size_t violations_ = 0;
};

struct NiaAdversary {
  std::function<std::pair<std::size_t, std::size_t>(Rng&)> propose;
  std::function<int(const Encoding& challenge, std::size_t x0, std::size_t x1, Rng&)> decide;
};

struct CiaAdversary {
  std::function<std::pair<std::size_t, std::size_t>(Rng&)> propose;
  std::function<int(const Encoding& challenge, std::size_t x0, std::size_t x1, EncodingOracle&, Rng&)> decide;
};

struct AdvantageEstimate {
  double advantage = 0.0;       // Pr[b' = b] - 1/2
  double standard_error = 0.0;  // binomial
  std::size_t trials = 0;
  std::size_t wins = 0;
};

/// Fresh key and bit per trial; trial t uses derive_seed(seed, t). The
/// adversary must propose two distinct points with equal labels.
AdvantageEstimate estimate_nia_advantage(const KeyedEncoder& encoder, const Concept& c, const NiaAdversary& adv,
                                         std::size_t trials, std::uint64_t seed);
AdvantageEstimate estimate_cia_advantage(const KeyedEncoder& encoder, const Concept& c, const CiaAdversary& adv,
                                         std::size_t trials, std::uint64_t seed);

/// Proposes a random same-label pair.
std::function<std::pair<std::size_t, std::size_t>(Rng&)> random_same_label_pair(const Concept& c);

/// Guesses the candidate whose index is nearest the first encoding entry.
NiaAdversary nearest_instance_adversary(const Concept& c);
/// Guesses 1 exactly when the first encoding entry equals x1.
NiaAdversary equality_adversary(const Concept& c);
NiaAdversary coin_flip_adversary(const Concept& c);

/// Queries every other point, then guesses by elimination among the outputs
/// it has not seen, falling back to a coin flip.
CiaAdversary exhaustive_query_adversary(const Concept& c);
/// Queries every other point; reads a class-rank entry if the encoding has one.
CiaAdversary rank_reading_adversary(const Concept& c);

struct LabeledEncoding {
  Encoding encoding;
  int label = 0;
};

using Classifier = std::function<int(const Encoding&)>;
using Learner = std::function<Classifier(const std::vector<LabeledEncoding>&)>;

/// Majority label per first encoding entry; unseen entries take the label
/// of the nearest seen entry (smaller on ties); 0 when nothing was seen.
Learner frequency_table_learner();

struct PredExtractorConfig {
  std::size_t m = 200;          // labeled encodings drawn per attempt
  double p = 0.5;               // fraction of positives in the target distribution
  double epsilon = 0.25;        // learner advantage over 1/2
  double delta = 0.25;          // learner failure probability
  double tau = 0.05;            // target risk
  std::size_t votes = 31;       // T fresh keys per prediction
  std::size_t retry_budget = 50;
  std::size_t heldout = 200;    // held-out encodings per class for the accuracy bar
};

/// ceil(ln(1/tau) / (2 epsilon^2)): votes that push a per-vote accuracy of
/// 1/2 + epsilon to majority error <= tau.
std::size_t chernoff_votes(double epsilon, double tau);

struct PredExtractor {
  Classifier base;
  KeyedEncoder encoder;
  std::size_t votes = 1;
  std::size_t attempts = 0;
  double heldout_accuracy = 0.0;

  /// Majority over `votes` fresh keys; ties go to label 0.
  int predict(std::size_t x, Rng& rng) const;
};

/// Learns from encodings of x0 (label 0) and x1 (label 1) under fresh keys,
/// with the label-0 count drawn from Binom(m, 1 - p); retrains until the
/// held-out balanced accuracy reaches 1/2 + epsilon. Extraction error after
/// `retry_budget` failed attempts.
PredExtractor pred_extractor(const Learner& learner, const KeyedEncoder& encoder, std::size_t x0, std::size_t x1,
                             const PredExtractorConfig& cfg, std::uint64_t seed);

/// Fraction of `queries` points drawn from `query_weights` that h* labels
/// differently from c.
double measure_risk(const PredExtractor& h, const Concept& c, std::span<const double> query_weights,
                    std::size_t queries, std::uint64_t seed);

}  // namespace encattack
