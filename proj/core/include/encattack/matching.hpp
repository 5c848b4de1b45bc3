#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "encattack/nn.hpp"
#include "encattack/permutation.hpp"

namespace encattack {

/// Cost matrices are Matrix2D with rows <= cols.
using CostMatrix = Matrix2D;

struct Assignment {
  std::vector<std::size_t> mapping;  // row -> column, columns distinct
  double total_cost = 0.0;           // summed in row order

  /// Only valid for square problems.
  Permutation as_permutation() const { return Permutation::from_indices(mapping); }
};

/// Minimum-cost assignment of every row to a distinct column, by shortest
/// augmenting paths in O(n^2 m). Among all optimal mappings the
/// lexicographically smallest is returned, so ties resolve deterministically.
///
/// Costs within `tie_tolerance(costs)` of each other per edge count as equal.
/// Throws a validation error on non-finite entries and a shape error when
/// rows > cols.
Assignment solve_assignment(const CostMatrix& costs);

/// Maximum-similarity assignment: solve_assignment on the negated matrix.
/// The returned total is the summed similarity.
Assignment solve_max_assignment(const Matrix2D& similarity);

/// Exhaustive search over all injective mappings, same tie rule. Size error
/// for more than 8 rows.
Assignment brute_force_assignment(const CostMatrix& costs);

/// Reduced-cost slack below which two assignments are treated as tied.
double tie_tolerance(const CostMatrix& costs) noexcept;

/// Writes the matrix as CSV, one row per line.
void dump_csv(const Matrix2D& m, const std::filesystem::path& path);

}  // namespace encattack
