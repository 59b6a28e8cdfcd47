#pragma once

// Rectangular min-cost assignment (rows <= cols), shortest augmenting path
// with potentials. O(rows^2 * cols).

#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

namespace lanecraft {

struct Assignment {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (gt i, pred pi(i)), sorted by i
  double total_cost = 0.0;
};

// cost[i][j]: cost of pairing row i with column j.
inline Assignment solve_assignment(const std::vector<std::vector<double>>& cost) {
  Assignment out;
  const std::size_t n = cost.size();
  if (n == 0) return out;
  const std::size_t m = cost[0].size();
  for (const auto& row : cost) {
    if (row.size() != m) throw std::invalid_argument("assignment: ragged cost matrix");
  }
  if (n > m) throw std::invalid_argument("assignment: more rows than columns");

  const double inf = std::numeric_limits<double>::infinity();
  // 1-based arrays; column 0 is the virtual start.
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      if (j1 == 0) throw std::invalid_argument("assignment: non-finite cost");
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::size_t> col_of(n);
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] != 0) col_of[p[j] - 1] = j - 1;
  }
  for (std::size_t i = 0; i < n; ++i) {
    out.pairs.emplace_back(i, col_of[i]);
    out.total_cost += cost[i][col_of[i]];
  }
  return out;
}

}  // namespace lanecraft
