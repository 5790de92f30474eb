#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <vector>

#include "versetopics/error.hpp"

namespace versetopics {

/// Assignment of rows to columns: `perm[row] = column`.
struct Assignment {
  std::vector<int> perm;
  double total = 0.0;
};

namespace detail {

/// Minimum-cost perfect matching on a square cost matrix (Kuhn-Munkres with
/// row/column potentials, O(n^3)). Returns perm[row] = column.
inline std::vector<int> min_cost_assignment(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
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
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> perm(n, -1);
  for (int j = 1; j <= n; ++j) perm[p[j] - 1] = j - 1;
  return perm;
}

inline double assignment_total(const Eigen::MatrixXd& score, const std::vector<int>& perm) {
  double total = 0.0;
  for (std::size_t i = 0; i < perm.size(); ++i) total += score(static_cast<Eigen::Index>(i), perm[i]);
  return total;
}

/// Best total over the sub-problem with the given rows/columns removed.
inline double best_completion(const Eigen::MatrixXd& score, const std::vector<char>& row_used,
                              const std::vector<char>& col_used) {
  std::vector<Eigen::Index> rows, cols;
  for (Eigen::Index i = 0; i < score.rows(); ++i) {
    if (!row_used[static_cast<std::size_t>(i)]) rows.push_back(i);
    if (!col_used[static_cast<std::size_t>(i)]) cols.push_back(i);
  }
  if (rows.empty()) return 0.0;
  const auto m = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd sub(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) sub(a, b) = score(rows[static_cast<std::size_t>(a)], cols[static_cast<std::size_t>(b)]);
  }
  const auto perm = min_cost_assignment(-sub);
  return assignment_total(sub, perm);
}

}  // namespace detail

/// Permutation maximising the summed score. Among optimal permutations the
/// lexicographically smallest `perm` is returned: rows are fixed in order to
/// the smallest column that still admits an optimal completion.
///
/// `total` is summed in row order, matching a plain enumeration of the same
/// permutation.
inline Assignment hungarian_max(const Eigen::MatrixXd& score) {
  if (score.rows() != score.cols()) throw InputError("assignment score matrix must be square");
  if (!score.allFinite()) throw InputError("assignment score matrix has non-finite entries");
  const auto n = static_cast<std::size_t>(score.rows());
  Assignment out;
  if (n == 0) return out;

  const auto first = detail::min_cost_assignment(-score);
  const double optimum = detail::assignment_total(score, first);
  const double slack = 1e-12 * (1.0 + score.cwiseAbs().sum());

  std::vector<char> row_used(n, 0), col_used(n, 0);
  out.perm.assign(n, -1);
  double fixed = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    row_used[r] = 1;
    for (std::size_t c = 0; c < n; ++c) {
      if (col_used[c]) continue;
      col_used[c] = 1;
      const double candidate = fixed + score(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) +
                               detail::best_completion(score, row_used, col_used);
      if (candidate >= optimum - slack) {
        out.perm[r] = static_cast<int>(c);
        fixed += score(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        break;
      }
      col_used[c] = 0;
    }
    if (out.perm[r] < 0) {
      // Only reachable through rounding; keep the solver's own choice.
      out.perm = first;
      break;
    }
  }
  out.total = detail::assignment_total(score, out.perm);
  return out;
}

inline std::vector<int> invert_permutation(const std::vector<int>& perm) {
  std::vector<int> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[static_cast<std::size_t>(perm[i])] = static_cast<int>(i);
  return inv;
}

inline bool is_permutation_of_range(const std::vector<int>& perm) {
  std::vector<char> seen(perm.size(), 0);
  for (int p : perm) {
    if (p < 0 || static_cast<std::size_t>(p) >= perm.size() || seen[static_cast<std::size_t>(p)]) return false;
    seen[static_cast<std::size_t>(p)] = 1;
  }
  return true;
}

}  // namespace versetopics
