#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "encattack/blob_io.hpp"
#include "encattack/challenge.hpp"
#include "encattack/dataset.hpp"
#include "encattack/error.hpp"
#include "test_support.hpp"

using namespace encattack;
using encattack::testing::TempDir;

namespace {

ImageSpec small_spec() {
  ImageSpec s;
  s.width = 8;
  s.height = 8;
  s.patches_per_side = 2;
  s.latent_width = 8;
  s.output_width = 8;
  return s;
}

double factorial(int s) {
  double f = 1.0;
  for (int i = 2; i <= s; ++i) f *= i;
  return f;
}

// Poisson(1) upper tail, the limiting law of fixed points.
double poisson1_tail(int s) {
  double below = 0.0;
  for (int j = 0; j < s; ++j) below += std::exp(-1.0) / factorial(j);
  return 1.0 - below;
}

std::string file_bytes(const std::filesystem::path& p) { return read_text_file(p); }

}  // namespace

TEST(MakeChallenge, SingleImageIsIdentity) {
  const auto data = generate_lowfreq(small_spec(), 3, 1);
  const auto [bundle, sol] = make_challenge(data, 1, {1, 2, 3});
  EXPECT_EQ(bundle.size(), 1u);
  EXPECT_TRUE(sol.sigma.is_identity());
}

TEST(MakeChallenge, TooLargeIsConfigurationError) {
  const auto data = generate_lowfreq(small_spec(), 3, 1);
  try {
    make_challenge(data, 4, {1, 2, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::configuration);
  }
}

TEST(MakeChallenge, ReencodingReproducesBundle) {
  const auto data = generate_lowfreq(small_spec(), 30, 2);
  const auto [bundle, sol] = make_challenge(data, 20, {11, 12, 13});
  ASSERT_EQ(bundle.encodings.size(), 20u);
  for (std::size_t i = 0; i < 20; ++i) {
    EXPECT_EQ(bundle.originals[i], data[sol.dataset_indices[i]]);
    EXPECT_EQ(encode_image(sol.key, bundle.originals[i], sol.patch_perms[i]), bundle.encodings[sol.sigma[i]]);
  }
}

TEST(MakeChallenge, FixedSeedsGiveIdenticalBytes) {
  TempDir a, b;
  const auto data = generate_lowfreq(small_spec(), 30, 2);
  save_bundle(make_challenge(data, 10, {5, 6, 7}).first, a.path());
  save_bundle(make_challenge(data, 10, {5, 6, 7}, {}, 4).first, b.path());
  for (const char* f : {"originals.json", "originals.bin", "encodings.json", "encodings.bin"}) {
    EXPECT_EQ(file_bytes(a / f), file_bytes(b / f)) << f;
  }
}

TEST(MakeChallenge, BundleDirectoryHoldsNoSecrets) {
  TempDir dir;
  const auto data = generate_lowfreq(small_spec(), 10, 2);
  const auto [bundle, sol] = make_challenge(data, 5, {1, 2, 3});
  save_bundle(bundle, dir / "bundle");
  save_solution(sol, dir / "solution");
  EXPECT_FALSE(std::filesystem::exists(dir / "bundle" / "solution.json"));
  EXPECT_FALSE(std::filesystem::exists(dir / "bundle" / "solution.bin"));
  const ChallengeBundle b2 = load_bundle(dir / "bundle");
  EXPECT_EQ(b2.originals, bundle.originals);
  EXPECT_EQ(b2.encodings, bundle.encodings);
  const HiddenSolution s2 = load_solution(dir / "solution");
  EXPECT_EQ(s2.sigma, sol.sigma);
  EXPECT_EQ(s2.key, sol.key);
  EXPECT_EQ(s2.patch_perms, sol.patch_perms);
  EXPECT_EQ(s2.dataset_indices, sol.dataset_indices);
}

TEST(ScoreMatching, PerfectAndSwapped) {
  const Permutation sigma = Permutation::from_indices({1, 0});
  EXPECT_EQ(score_matching(std::vector<std::size_t>{1, 0}, sigma).score, 2u);
  EXPECT_EQ(score_matching(std::vector<std::size_t>{0, 1}, sigma).score, 0u);
  const ScoreReport r = score_matching(std::vector<std::size_t>{1, 0}, sigma);
  EXPECT_EQ(r.n, 2u);
  EXPECT_EQ(r.correct, (std::vector<bool>{true, true}));
}

TEST(ScoreMatching, NonBijectiveGuessIsValidationError) {
  const Permutation sigma = Permutation::identity(3);
  try {
    score_matching(std::vector<std::size_t>{0, 0, 1}, sigma);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::validation);
  }
  EXPECT_THROW(score_matching(std::vector<std::size_t>{0, 1}, sigma), Error);
}

TEST(ScoreMatching, InvariantUnderConsistentRelabeling) {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const Permutation sigma = Permutation::random(12, rng);
    const Permutation guess = Permutation::random(12, rng);
    const Permutation tau = Permutation::random(12, rng);
    EXPECT_EQ(score_matching(compose(tau, guess).indices(), compose(tau, sigma)).score,
              score_matching(guess.indices(), sigma).score);
  }
}

TEST(ScoreMatching, RandomGuessStatistics) {
  for (const std::size_t n : {2u, 10u, 50u}) {
    Rng rng(100 + n);
    const Permutation sigma = Permutation::random(n, rng);
    const int trials = 100000;
    std::vector<double> at_least(5, 0.0);
    std::vector<double> choose_moment(5, 0.0);
    double sum = 0.0;
    for (int t = 0; t < trials; ++t) {
      const std::size_t s = score_matching(Permutation::random(n, rng).indices(), sigma).score;
      sum += static_cast<double>(s);
      double c = 1.0;
      for (int k = 0; k <= 4; ++k) {
        if (static_cast<int>(s) >= k) at_least[k] += 1.0;
        choose_moment[k] += c;
        c *= (static_cast<double>(s) - k) / (k + 1);
      }
    }
    EXPECT_NEAR(sum / trials, 1.0, 0.02) << "n=" << n;
    if (n < 10) continue;
    for (int s = 1; s <= 4; ++s) {
      const double p = at_least[s] / trials;
      // 1/s! bounds the tail and equals E[C(score, s)].
      EXPECT_LE(p, 1.0 / factorial(s)) << "s=" << s;
      EXPECT_NEAR(choose_moment[s] / trials, 1.0 / factorial(s), 0.1 / factorial(s)) << "s=" << s;
      EXPECT_NEAR(p, poisson1_tail(s), 0.1 * poisson1_tail(s)) << "s=" << s;
    }
  }
}

TEST(ScoreChallenge2, ExactGuessScoresN) {
  const std::vector<std::vector<double>> y = {{1, 1}, {1, -1}, {-1, 1}};
  EXPECT_EQ(score_challenge2(y, y, Distance::hamming).score, 3u);
  EXPECT_EQ(score_challenge2(y, y, Distance::euclidean).score, 3u);
}

TEST(ScoreChallenge2, ConstantGuessScoresAtMostOne) {
  const std::vector<std::vector<double>> y = {{1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
  const std::vector<std::vector<double>> g(4, std::vector<double>{1, 1});
  const ScoreReport r = score_challenge2(y, g, Distance::hamming);
  EXPECT_LE(r.score, 1u);
  // Every tie resolves to j = 0, which only counts for i = 0.
  EXPECT_TRUE(r.correct[0]);
}

TEST(ScoreChallenge2, EmptyIsValidationError) {
  const std::vector<std::vector<double>> empty;
  try {
    score_challenge2(empty, empty, Distance::hamming);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::validation);
  }
}

TEST(GuessIo, RoundTripAndValidation) {
  TempDir dir;
  const std::vector<std::size_t> g = {2, 0, 1};
  save_guess(g, dir / "guess.json");
  EXPECT_EQ(load_guess(dir / "guess.json"), g);
  write_text_file(dir / "bad.json", R"({"format": "encattack.guess/1", "guess": "nope"})");
  try {
    load_guess(dir / "bad.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::schema);
  }
}
