#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "lift3d/error.hpp"

namespace lift3d {

// Dense row-major square cost matrix.
struct CostMatrix {
  std::size_t n = 0;
  std::vector<double> values;

  CostMatrix() = default;
  explicit CostMatrix(std::size_t size) : n(size), values(size * size, 0.0) {}

  double &operator()(std::size_t r, std::size_t c) { return values[r * n + c]; }
  double operator()(std::size_t r, std::size_t c) const {
    return values[r * n + c];
  }
};

struct Assignment {
  std::vector<std::size_t> row_to_col;
  double total_cost = 0.0;
};

// Exact minimum-cost perfect matching, O(n^3) shortest augmenting paths with
// row/column potentials (Kuhn-Munkres in the Jonker-Volgenant formulation).
inline Assignment solve_assignment(const CostMatrix &cost) {
  const std::size_t n = cost.n;
  for (double v : cost.values)
    require(std::isfinite(v), "assignment costs must be finite");
  Assignment out;
  out.row_to_col.assign(n, 0);
  if (n == 0) return out;

  constexpr double kInf = std::numeric_limits<double>::infinity();
  // 1-based internally; column 0 is the virtual start column.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), min_slack(n + 1);
  std::vector<std::size_t> col_owner(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);

  for (std::size_t row = 1; row <= n; ++row) {
    col_owner[0] = row;
    std::size_t col0 = 0;
    std::fill(min_slack.begin(), min_slack.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[col0] = 1;
      std::size_t r0 = col_owner[col0], col1 = 0;
      double delta = kInf;
      const double *row_costs = &cost.values[(r0 - 1) * n];
      for (std::size_t c = 1; c <= n; ++c) {
        if (used[c]) continue;
        double slack = row_costs[c - 1] - u[r0] - v[c];
        if (slack < min_slack[c]) {
          min_slack[c] = slack;
          way[c] = col0;
        }
        if (min_slack[c] < delta) {
          delta = min_slack[c];
          col1 = c;
        }
      }
      for (std::size_t c = 0; c <= n; ++c) {
        if (used[c]) {
          u[col_owner[c]] += delta;
          v[c] -= delta;
        } else {
          min_slack[c] -= delta;
        }
      }
      col0 = col1;
    } while (col_owner[col0] != 0);
    do {
      std::size_t col1 = way[col0];
      col_owner[col0] = col_owner[col1];
      col0 = col1;
    } while (col0 != 0);
  }
  for (std::size_t c = 1; c <= n; ++c)
    out.row_to_col[col_owner[c] - 1] = c - 1;
  // Sum the chosen entries directly rather than trusting the dual value,
  // which accumulates rounding across augmentations.
  for (std::size_t r = 0; r < n; ++r) out.total_cost += cost(r, out.row_to_col[r]);
  return out;
}

}  // namespace lift3d
