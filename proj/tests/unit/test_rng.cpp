#include <gtest/gtest.h>

#include <cmath>
#include <set>
#include <vector>

#include "encattack/rng.hpp"

using namespace encattack;

TEST(Rng, PhiloxKnownAnswerZeroCounterZeroKey) {
  // Published Philox4x32-10 vector: counter {0,0,0,0}, key {0,0}.
  Rng rng(0, 0);
  EXPECT_EQ(rng.next_u32(), 0x6627e8d5u);
  EXPECT_EQ(rng.next_u32(), 0xe169c58du);
  EXPECT_EQ(rng.next_u32(), 0xbc57ac4cu);
  EXPECT_EQ(rng.next_u32(), 0x9b00dbd8u);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(42, 7), b(42, 7);
  for (int i = 0; i < 1000; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, SplitStreamsDiffer) {
  const Rng root(9);
  Rng a = root.split(0), b = root.split(1);
  int equal = 0;
  for (int i = 0; i < 1000; ++i) equal += a.next_u64() == b.next_u64() ? 1 : 0;
  EXPECT_EQ(equal, 0);
  Rng a2 = root.split(0);
  Rng a3 = Rng(9).split(0);
  EXPECT_EQ(a2.next_u64(), a3.next_u64());
}

TEST(Rng, UniformMoments) {
  Rng rng(3);
  const int n = 200000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
    sq += u * u;
  }
  const double mean = sum / n;
  EXPECT_NEAR(mean, 0.5, 4.0 * std::sqrt(1.0 / 12.0 / n));
  EXPECT_NEAR(sq / n - mean * mean, 1.0 / 12.0, 0.002);
}

TEST(Rng, NormalMoments) {
  Rng rng(4);
  const int n = 200000;
  double sum = 0.0, sq = 0.0, quart = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    sum += z;
    sq += z * z;
    quart += z * z * z * z;
  }
  EXPECT_NEAR(sum / n, 0.0, 4.0 / std::sqrt(n));
  EXPECT_NEAR(sq / n, 1.0, 0.02);
  EXPECT_NEAR(quart / n, 3.0, 0.1);
}

TEST(Rng, BelowIsUniformOverSmallRange) {
  Rng rng(5);
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) ++counts[rng.below(7)];
  // Chi-square with 6 degrees of freedom; 22.46 is the 0.999 quantile.
  double chi2 = 0.0;
  for (const int c : counts) chi2 += (c - n / 7.0) * (c - n / 7.0) / (n / 7.0);
  EXPECT_LT(chi2, 22.46);
}

TEST(Rng, BinomialMean) {
  Rng rng(6);
  double sum = 0.0;
  const int reps = 20000;
  for (int i = 0; i < reps; ++i) sum += static_cast<double>(rng.binomial(20, 0.3));
  EXPECT_NEAR(sum / reps, 6.0, 4.0 * std::sqrt(20 * 0.3 * 0.7 / reps));
  EXPECT_EQ(rng.binomial(10, 0.0), 0u);
  EXPECT_EQ(rng.binomial(10, 1.0), 10u);
}

TEST(Rng, DeriveSeedSpreads) {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 50; ++s) {
    for (std::uint64_t id = 0; id < 50; ++id) seen.insert(derive_seed(s, id));
  }
  EXPECT_EQ(seen.size(), 2500u);
}
