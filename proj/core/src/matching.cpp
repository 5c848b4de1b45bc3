#include "encattack/matching.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <string>

#include "encattack/error.hpp"

namespace encattack {
namespace {

void check_costs(const CostMatrix& costs) {
  require(costs.data.size() == costs.rows * costs.cols, ErrorKind::shape, "cost matrix storage does not match shape");
  require(costs.rows <= costs.cols, ErrorKind::shape,
          "cost matrix has more rows (" + std::to_string(costs.rows) + ") than columns (" +
              std::to_string(costs.cols) + "); transpose it first");
  require(costs.all_finite(), ErrorKind::validation, "cost matrix contains NaN or infinite entries");
}

double row_order_total(const CostMatrix& costs, const std::vector<std::size_t>& mapping) {
  double total = 0.0;
  for (std::size_t r = 0; r < mapping.size(); ++r) total += costs(r, mapping[r]);
  return total;
}

// Shortest augmenting path with row/column potentials on a square matrix.
// Returns row -> column and fills the potentials.
std::vector<std::size_t> hungarian(const Matrix2D& c, std::vector<double>& u, std::vector<double>& v) {
  const std::size_t n = c.rows;
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based internally; index 0 is the virtual source column.
  std::vector<double> pu(n + 1, 0.0), pv(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> col_row(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    col_row[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = col_row[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = c(i0 - 1, j - 1) - pu[i0] - pv[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          pu[col_row[j]] += delta;
          pv[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (col_row[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      col_row[j0] = col_row[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> row_col(n);
  for (std::size_t j = 1; j <= n; ++j) row_col[col_row[j] - 1] = j - 1;
  u.assign(pu.begin() + 1, pu.end());
  v.assign(pv.begin() + 1, pv.end());
  return row_col;
}

// Among perfect matchings of the tight-edge graph, moves `row_col` to the
// lexicographically smallest one by fixing rows in order.
void lexicographic_min(const std::vector<std::vector<std::size_t>>& tight, std::vector<std::size_t>& row_col) {
  const std::size_t n = row_col.size();
  std::vector<std::size_t> col_row(n);
  for (std::size_t r = 0; r < n; ++r) col_row[row_col[r]] = r;
  std::vector<char> col_fixed(n, 0);
  std::vector<std::size_t> parent_col(n);
  std::vector<char> seen(n);
  std::vector<std::size_t> queue;

  for (std::size_t r = 0; r < n; ++r) {
    for (const std::size_t c : tight[r]) {
      if (col_fixed[c]) continue;
      if (c == row_col[r]) break;
      // Re-route the row holding c to the column r would release.
      const std::size_t displaced = col_row[c];
      const std::size_t target = row_col[r];
      std::fill(seen.begin(), seen.end(), 0);
      queue.assign(1, displaced);
      constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
      std::vector<std::size_t> from_row(n, none);
      bool found = false;
      for (std::size_t head = 0; head < queue.size() && !found; ++head) {
        const std::size_t row = queue[head];
        for (const std::size_t col : tight[row]) {
          if (col_fixed[col] || col == c || seen[col]) continue;
          seen[col] = 1;
          from_row[col] = row;
          if (col == target) {
            found = true;
            break;
          }
          queue.push_back(col_row[col]);
        }
      }
      if (!found) continue;
      // Flip the alternating path ending at `target`.
      std::size_t col = target;
      while (true) {
        const std::size_t row = from_row[col];
        const std::size_t prev = row_col[row];
        row_col[row] = col;
        col_row[col] = row;
        if (row == displaced) break;
        col = prev;
      }
      row_col[r] = c;
      col_row[c] = r;
      break;
    }
    col_fixed[row_col[r]] = 1;
  }
}

}  // namespace

double tie_tolerance(const CostMatrix& costs) noexcept {
  double scale = 1.0;
  for (const double v : costs.data) scale = std::max(scale, std::abs(v));
  return 1e-9 * scale;
}

Assignment solve_assignment(const CostMatrix& costs) {
  check_costs(costs);
  if (costs.rows == 0) return {};
  const std::size_t n = costs.cols;
  Matrix2D square(n, n, 0.0);
  std::copy(costs.data.begin(), costs.data.end(), square.data.begin());

  std::vector<double> u, v;
  std::vector<std::size_t> row_col = hungarian(square, u, v);

  const double tol = tie_tolerance(costs);
  std::vector<std::vector<std::size_t>> tight(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      if (square(r, c) - u[r] - v[c] <= tol || c == row_col[r]) tight[r].push_back(c);
    }
  }
  lexicographic_min(tight, row_col);

  Assignment a;
  a.mapping.assign(row_col.begin(), row_col.begin() + static_cast<std::ptrdiff_t>(costs.rows));
  a.total_cost = row_order_total(costs, a.mapping);
  return a;
}

Assignment solve_max_assignment(const Matrix2D& similarity) {
  Matrix2D neg = similarity;
  for (double& x : neg.data) x = -x;
  Assignment a = solve_assignment(neg);
  a.total_cost = row_order_total(similarity, a.mapping);
  return a;
}

Assignment brute_force_assignment(const CostMatrix& costs) {
  require(costs.rows <= 8 && costs.cols <= 8, ErrorKind::size,
          "brute-force assignment is limited to 8x8, got " + std::to_string(costs.rows) + "x" +
              std::to_string(costs.cols));
  check_costs(costs);
  if (costs.rows == 0) return {};
  const std::size_t n = costs.rows;
  const std::size_t m = costs.cols;

  std::vector<std::size_t> current(n);
  std::vector<char> used(m, 0);
  // Visits every injective mapping in lexicographic order.
  auto enumerate = [&](auto&& self, std::size_t r, auto&& visit) -> bool {
    if (r == n) return visit(current);
    for (std::size_t c = 0; c < m; ++c) {
      if (used[c]) continue;
      used[c] = 1;
      current[r] = c;
      const bool stop = self(self, r + 1, visit);
      used[c] = 0;
      if (stop) return true;
    }
    return false;
  };

  double best = std::numeric_limits<double>::infinity();
  enumerate(enumerate, 0, [&](const std::vector<std::size_t>& mapping) {
    best = std::min(best, row_order_total(costs, mapping));
    return false;
  });
  const double slack = static_cast<double>(n) * tie_tolerance(costs);
  Assignment a;
  enumerate(enumerate, 0, [&](const std::vector<std::size_t>& mapping) {
    const double total = row_order_total(costs, mapping);
    if (total <= best + slack) {
      a.mapping = mapping;
      a.total_cost = total;
      return true;
    }
    return false;
  });
  return a;
}

void dump_csv(const Matrix2D& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io, "cannot write '" + path.string() + "'");
  out << std::setprecision(17);
  for (std::size_t r = 0; r < m.rows; ++r) {
    for (std::size_t c = 0; c < m.cols; ++c) {
      if (c) out << ',';
      out << m(r, c);
    }
    out << '\n';
  }
}

}  // namespace encattack
