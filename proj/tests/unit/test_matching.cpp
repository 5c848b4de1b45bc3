#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "encattack/blob_io.hpp"
#include "encattack/error.hpp"
#include "encattack/matching.hpp"
#include "test_support.hpp"

using namespace encattack;
using encattack::testing::random_matrix;
using encattack::testing::TempDir;

namespace {

Matrix2D from_rows(const std::vector<std::vector<double>>& rows) {
  Matrix2D m(rows.size(), rows.front().size());
  for (std::size_t r = 0; r < rows.size(); ++r) std::copy(rows[r].begin(), rows[r].end(), m.row(r).begin());
  return m;
}

// Independent oracle: every permutation of a square matrix via next_permutation.
double min_cost_by_enumeration(const Matrix2D& c) {
  std::vector<std::size_t> p(c.rows);
  std::iota(p.begin(), p.end(), std::size_t{0});
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t r = 0; r < c.rows; ++r) s += c(r, p[r]);
    best = std::min(best, s);
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

double cost_of(const Matrix2D& c, const std::vector<std::size_t>& mapping) {
  double s = 0.0;
  for (std::size_t r = 0; r < mapping.size(); ++r) s += c(r, mapping[r]);
  return s;
}

Matrix2D integer_matrix(std::size_t rows, std::size_t cols, int range, Rng& rng) {
  Matrix2D m(rows, cols);
  for (double& v : m.data) v = static_cast<double>(rng.below(static_cast<std::uint64_t>(range)));
  return m;
}

}  // namespace

TEST(SolveAssignment, OneByOne) {
  const Assignment a = solve_assignment(from_rows({{5}}));
  EXPECT_EQ(a.mapping, (std::vector<std::size_t>{0}));
  EXPECT_EQ(a.total_cost, 5.0);
}

TEST(SolveAssignment, TwoByTwoIdentity) {
  const Assignment a = solve_assignment(from_rows({{0, 1}, {1, 0}}));
  EXPECT_EQ(a.mapping, (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(a.total_cost, 0.0);
}

TEST(SolveAssignment, ThreeByThreeDiagonal) {
  const Matrix2D c = from_rows({{1, 2, 3}, {2, 1, 3}, {3, 2, 1}});
  EXPECT_EQ(brute_force_assignment(c).mapping, (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(brute_force_assignment(c).total_cost, 3.0);
  EXPECT_EQ(solve_assignment(c).mapping, (std::vector<std::size_t>{0, 1, 2}));
}

TEST(SolveAssignment, AllTwoByTwoBinaryMatrices) {
  for (int bits = 0; bits < 16; ++bits) {
    Matrix2D c(2, 2);
    for (int i = 0; i < 4; ++i) c.data[i] = (bits >> i) & 1;
    const Assignment a = solve_assignment(c);
    const Assignment b = brute_force_assignment(c);
    EXPECT_EQ(a.mapping, b.mapping) << bits;
    EXPECT_EQ(a.total_cost, b.total_cost) << bits;
  }
}

TEST(SolveAssignment, TwoHundredRandomSevenBySeven) {
  Rng rng(7);
  for (int t = 0; t < 200; ++t) {
    const Matrix2D c = random_matrix(7, 7, rng, -10.0, 10.0);
    const Assignment a = solve_assignment(c);
    const Assignment b = brute_force_assignment(c);
    ASSERT_EQ(a.mapping, b.mapping) << "instance " << t;
    ASSERT_EQ(cost_of(c, a.mapping), min_cost_by_enumeration(c)) << "instance " << t;
  }
}

TEST(SolveAssignment, TiesResolveLexicographically) {
  Rng rng(8);
  for (int t = 0; t < 200; ++t) {
    const std::size_t n = 2 + rng.below(6);
    const Matrix2D c = integer_matrix(n, n, 3, rng);
    const Assignment a = solve_assignment(c);
    const Assignment b = brute_force_assignment(c);
    ASSERT_EQ(a.mapping, b.mapping) << "instance " << t;
    ASSERT_EQ(a.total_cost, min_cost_by_enumeration(c));
  }
  // All-equal costs: the identity is the smallest mapping.
  EXPECT_EQ(solve_assignment(Matrix2D(5, 5, 1.0)).mapping, (std::vector<std::size_t>{0, 1, 2, 3, 4}));
}

TEST(SolveAssignment, RectangularMatchesBruteForce) {
  Rng rng(9);
  for (int t = 0; t < 100; ++t) {
    const std::size_t rows = 1 + rng.below(6);
    const std::size_t cols = rows + rng.below(3);
    const Matrix2D c = (t % 2) ? random_matrix(rows, cols, rng) : integer_matrix(rows, cols, 4, rng);
    ASSERT_EQ(solve_assignment(c).mapping, brute_force_assignment(c).mapping) << "instance " << t;
  }
}

TEST(SolveAssignment, BeatsSampledPermutations) {
  Rng rng(10);
  for (int t = 0; t < 5; ++t) {
    const Matrix2D c = random_matrix(30, 30, rng);
    const double best = solve_assignment(c).total_cost;
    for (int s = 0; s < 10000; ++s) {
      ASSERT_LE(best, cost_of(c, Permutation::random(30, rng).indices()) + 1e-9);
    }
  }
}

TEST(SolveAssignment, RowShiftKeepsMapping) {
  Rng rng(11);
  for (int t = 0; t < 50; ++t) {
    Matrix2D c = random_matrix(6, 6, rng);
    const Assignment before = brute_force_assignment(c);
    const std::size_t row = rng.below(6);
    const double shift = rng.uniform(-5.0, 5.0);
    for (double& v : c.row(row)) v += shift;
    const Assignment after = solve_assignment(c);
    EXPECT_EQ(after.mapping, before.mapping);
    EXPECT_NEAR(after.total_cost, before.total_cost + shift, 1e-9);
  }
}

TEST(SolveAssignment, MaximizationNegates) {
  Rng rng(12);
  const Matrix2D s = random_matrix(6, 6, rng);
  Matrix2D neg = s;
  for (double& v : neg.data) v = -v;
  const Assignment a = solve_max_assignment(s);
  EXPECT_EQ(a.mapping, brute_force_assignment(neg).mapping);
  EXPECT_NEAR(a.total_cost, cost_of(s, a.mapping), 1e-12);
}

TEST(SolveAssignment, Errors) {
  Matrix2D c(2, 2, 0.0);
  c(1, 1) = std::numeric_limits<double>::quiet_NaN();
  try {
    solve_assignment(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::validation);
  }
  c(1, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(solve_assignment(c), Error);
  try {
    solve_assignment(Matrix2D(3, 2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape);
  }
  try {
    brute_force_assignment(Matrix2D(9, 9));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::size);
  }
}

TEST(SolveAssignment, LargeInstanceIsAPermutation) {
  Rng rng(13);
  const Matrix2D c = random_matrix(300, 300, rng);
  const Assignment a = solve_assignment(c);
  EXPECT_TRUE(is_bijection(a.mapping));
  EXPECT_NEAR(a.total_cost, cost_of(c, a.mapping), 1e-9);
}

TEST(DumpCsv, WritesRows) {
  TempDir dir;
  dump_csv(from_rows({{1, 2}, {3, 4.5}}), dir / "m.csv");
  EXPECT_EQ(read_text_file(dir / "m.csv"), "1,2\n3,4.5\n");
}
