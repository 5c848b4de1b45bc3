#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <vector>

#include "encattack/counterexample.hpp"
#include "encattack/error.hpp"
#include "encattack/theory.hpp"

using namespace encattack;

namespace {

std::vector<double> uniform_weights(std::size_t n) { return std::vector<double>(n, 1.0 / static_cast<double>(n)); }

std::vector<double> skewed_weights(std::size_t n) {
  std::vector<double> w(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += w[i] = 1.0 / static_cast<double>(i + 1);
  for (double& v : w) v /= total;
  return w;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::io;
}

}  // namespace

TEST(Domain, UniformValidatesAndSamplesInRange) {
  const FiniteDomain d = FiniteDomain::uniform(8);
  d.validate();
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) EXPECT_LT(d.sample(rng), 8u);
  FiniteDomain bad = d;
  bad.instances[1] = bad.instances[0];
  EXPECT_EQ(kind_of([&] { bad.validate(); }), ErrorKind::validation);
  bad = d;
  bad.weights[0] += 0.1;
  EXPECT_EQ(kind_of([&] { bad.validate(); }), ErrorKind::validation);
}

TEST(Concept, ThresholdMembersAndRanks) {
  const Concept c = threshold_concept(8, 5);
  EXPECT_EQ(c.members(0), (std::vector<std::size_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(c.members(1), (std::vector<std::size_t>{5, 6, 7}));
  EXPECT_EQ(c.class_rank(6), 1u);
  EXPECT_EQ(kind_of([] { threshold_concept(4, 0).require_both_classes(); }), ErrorKind::validation);
}

TEST(IdealEncoder, ExhaustiveWeakIdealOnEightPoints) {
  for (std::size_t t = 1; t < 8; ++t) {
    const Concept c = threshold_concept(8, t);
    const WeakIdealCheck r = check_weakly_ideal(c);
    EXPECT_TRUE(r.label_preserving);
    EXPECT_TRUE(r.distribution_identical);
    const auto factorial = [](std::size_t n) {
      std::size_t f = 1;
      for (std::size_t i = 2; i <= n; ++i) f *= i;
      return f;
    };
    EXPECT_EQ(r.keys, factorial(t) * factorial(8 - t));
  }
}

TEST(IdealEncoder, CheckerRejectsLeakyAndLabelFlippingSchemes) {
  const Concept c = threshold_concept(8, 4);
  // Key-independent identity: label preserving but not identically distributed.
  const WeakIdealCheck id = check_weakly_ideal(c, 3, [](std::size_t x, std::size_t) { return x; });
  EXPECT_TRUE(id.label_preserving);
  EXPECT_FALSE(id.distribution_identical);
  const WeakIdealCheck flip = check_weakly_ideal(c, 8, [](std::size_t x, std::size_t k) { return (x + k) % 8; });
  EXPECT_FALSE(flip.label_preserving);
}

TEST(IdealEncoder, OutputUniformWithinClass) {
  const Concept c = threshold_concept(10, 4);
  Rng rng(2);
  // Point 7 lives in a class of 6.
  const double expected = 100000.0 / 6.0;
  std::map<std::size_t, std::size_t> hist;
  for (int k = 0; k < 100000; ++k) ++hist[ideal_encode(c, sample_ideal_key(c, rng), 7)];
  ASSERT_EQ(hist.size(), 6u);
  double chi2 = 0.0;
  for (const auto& [y, n] : hist) {
    EXPECT_GE(y, 4u);
    chi2 += std::pow(static_cast<double>(n) - expected, 2) / expected;
  }
  EXPECT_LT(chi2, 20.5);  // 5 dof, p = 0.001
}

TEST(IdealEncoder, EnumerationRefusesHugeDomains) {
  EXPECT_EQ(kind_of([] { enumerate_ideal_keys(threshold_concept(24, 12)); }), ErrorKind::size);
}

TEST(Games, IdealEncoderGivesNoAdvantage) {
  const Concept c = threshold_concept(8, 4);
  for (const auto& adv : {nearest_instance_adversary(c), equality_adversary(c), coin_flip_adversary(c)}) {
    const AdvantageEstimate e = estimate_nia_advantage(ideal_encoder(c), c, adv, 10000, 3);
    EXPECT_EQ(e.trials, 10000u);
    EXPECT_LE(std::abs(e.advantage), 3.0 * e.standard_error + 1e-12);
  }
  for (const auto& adv : {exhaustive_query_adversary(c), rank_reading_adversary(c)}) {
    const AdvantageEstimate e = estimate_cia_advantage(ideal_encoder(c), c, adv, 10000, 4);
    EXPECT_LE(std::abs(e.advantage), 3.0 * e.standard_error + 1e-12);
  }
}

TEST(Games, LeakyEncodersAreBroken) {
  const Concept c = threshold_concept(8, 4);
  EXPECT_DOUBLE_EQ(estimate_nia_advantage(identity_encoder(), c, equality_adversary(c), 500, 5).advantage, 0.5);
  EXPECT_DOUBLE_EQ(estimate_cia_advantage(identity_encoder(), c, exhaustive_query_adversary(c), 500, 6).advantage,
                   0.5);
  EXPECT_DOUBLE_EQ(
      estimate_cia_advantage(rank_leaking_encoder(c), c, rank_reading_adversary(c), 500, 7).advantage, 0.5);
}

TEST(Games, EstimatesAreSeedDeterministic) {
  const Concept c = threshold_concept(8, 4);
  const auto a = estimate_nia_advantage(ideal_encoder(c), c, coin_flip_adversary(c), 2000, 8);
  const auto b = estimate_nia_advantage(ideal_encoder(c), c, coin_flip_adversary(c), 2000, 8);
  EXPECT_EQ(a.wins, b.wins);
  EXPECT_NEAR(a.standard_error, std::sqrt(0.25 / 2000.0), 1e-3);
}

TEST(Games, ZeroTrialsAndBadProposalsAreRejected) {
  const Concept c = threshold_concept(8, 4);
  EXPECT_EQ(kind_of([&] { estimate_nia_advantage(ideal_encoder(c), c, coin_flip_adversary(c), 0, 1); }),
            ErrorKind::validation);
  NiaAdversary cross = coin_flip_adversary(c);
  cross.propose = [](Rng&) { return std::pair<std::size_t, std::size_t>{0, 7}; };
  EXPECT_EQ(kind_of([&] { estimate_nia_advantage(ideal_encoder(c), c, cross, 10, 1); }), ErrorKind::validation);
}

TEST(Games, OracleRefusesChallengePoints) {
  EncodingOracle oracle([](std::size_t x) { return Encoding{static_cast<std::int64_t>(x)}; }, 2, 5);
  EXPECT_EQ(oracle.query(3), Encoding{3});
  EXPECT_EQ(kind_of([&] { oracle.query(5); }), ErrorKind::protocol);
  EXPECT_EQ(oracle.queries(), 1u);
  EXPECT_EQ(oracle.violations(), 1u);
}

TEST(Pred, ChernoffVoteCount) {
  EXPECT_EQ(chernoff_votes(0.25, 0.05), 24u);  // ln 20 / 0.125 = 23.97
  EXPECT_EQ(chernoff_votes(0.5, 0.5), 2u);     // ln 2 / 0.5 = 1.386
  EXPECT_EQ(kind_of([] { chernoff_votes(0.0, 0.05); }), ErrorKind::configuration);
}

TEST(Pred, TwoPointDomainIsExact) {
  const Concept c = threshold_concept(2, 1);
  PredExtractorConfig cfg;
  cfg.votes = 1;
  const PredExtractor h = pred_extractor(frequency_table_learner(), ideal_encoder(c), 0, 1, cfg, 9);
  Rng rng(10);
  EXPECT_EQ(h.predict(0, rng), 0);
  EXPECT_EQ(h.predict(1, rng), 1);
  EXPECT_DOUBLE_EQ(measure_risk(h, c, uniform_weights(2), 1000, 11), 0.0);
}

TEST(Pred, ThresholdDomainRiskBelowTarget) {
  const Concept c = threshold_concept(64, 32);
  PredExtractorConfig cfg;
  cfg.votes = chernoff_votes(cfg.epsilon, cfg.tau);
  const PredExtractor h = pred_extractor(frequency_table_learner(), ideal_encoder(c), 0, 63, cfg, 12);
  EXPECT_GE(h.heldout_accuracy, 0.5 + cfg.epsilon);
  EXPECT_LE(measure_risk(h, c, uniform_weights(64), 1000, 13), cfg.tau);
  EXPECT_LE(measure_risk(h, c, skewed_weights(64), 1000, 14), cfg.tau);
}

TEST(Pred, MoreVotesNeverHurtMuch) {
  const Concept c = threshold_concept(64, 20);
  PredExtractorConfig cfg;
  cfg.m = 12;
  std::vector<double> risks;
  for (const std::size_t t : {1u, 7u, 31u}) {
    cfg.votes = t;
    const PredExtractor h = pred_extractor(frequency_table_learner(), ideal_encoder(c), 0, 63, cfg, 15);
    risks.push_back(measure_risk(h, c, uniform_weights(64), 2000, 16));
  }
  EXPECT_LE(risks[1], risks[0] + 0.03);
  EXPECT_LE(risks[2], risks[1] + 0.03);
}

TEST(Pred, BlindEncoderExhaustsRetries) {
  const Concept c = threshold_concept(8, 4);
  // Every point encodes to the same value, so nothing is learnable.
  const KeyedEncoder blind = [](std::uint64_t) { return EncodeFn([](std::size_t) { return Encoding{0}; }); };
  PredExtractorConfig cfg;
  cfg.retry_budget = 3;
  EXPECT_EQ(kind_of([&] { pred_extractor(frequency_table_learner(), blind, 0, 7, cfg, 17); }),
            ErrorKind::extraction);
}

TEST(Counterexample, SchemeRevealsInputAndKeyedTag) {
  const BinaryScheme s{8, 64, 99};
  for (std::uint64_t x = 0; x < 256; x += 17) {
    const auto e = s.encode(x);
    ASSERT_EQ(e.size(), 72u);
    EXPECT_EQ(reconstruct(e, 8), x);
    for (const double v : e) EXPECT_TRUE(v == 1.0 || v == -1.0);
  }
  EXPECT_EQ(s.tag(5), s.tag(5));
  EXPECT_NE(s.tag(5), (BinaryScheme{8, 64, 100}.tag(5)));
  EXPECT_EQ(tag_guess_from_string(to_string(TagGuess::constant)), TagGuess::constant);
}

TEST(Counterexample, ScoreFallsWithTagLength) {
  std::vector<double> means;
  for (const std::size_t bits : {256u, 1024u, 4096u}) {
    const Challenge2Result r = challenge2_counterexample(8, bits, 64, 100, 18);
    EXPECT_TRUE(r.reconstruction_exact);
    EXPECT_EQ(r.scores.size(), 100u);
    means.push_back(r.mean_score);
  }
  EXPECT_LE(means[1], means[0]);
  EXPECT_LE(means[2], means[1]);
  EXPECT_LE(means[2], 2.0);
}

TEST(Counterexample, ExactKeyWinsOutright) {
  const Challenge2Result r = challenge2_counterexample(8, 256, 32, 10, 19, TagGuess::exact_key);
  EXPECT_DOUBLE_EQ(r.mean_score, 32.0);
  EXPECT_EQ(kind_of([] { challenge2_counterexample(3, 16, 9, 1, 1); }), ErrorKind::configuration);
}
