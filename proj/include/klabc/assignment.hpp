#ifndef KLABC_ASSIGNMENT_HPP
#define KLABC_ASSIGNMENT_HPP

#include <Eigen/Dense>

#include <limits>
#include <vector>

namespace klabc {

/// Minimum-cost perfect matching on a square cost matrix (shortest augmenting
/// paths with dual potentials, O(L^3)). Returns row -> column.
inline std::vector<Eigen::Index> solve_assignment(const Eigen::MatrixXd& cost) {
  const Eigen::Index n = cost.rows();
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based with a virtual column 0.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<Eigen::Index> owner(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);

  for (Eigen::Index i = 1; i <= n; ++i) {
    owner[0] = i;
    Eigen::Index j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const Eigen::Index i0 = owner[j0];
      double delta = inf;
      Eigen::Index j1 = 0;
      for (Eigen::Index j = 1; j <= n; ++j) {
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
      for (Eigen::Index j = 0; j <= n; ++j) {
        if (used[j]) {
          u[owner[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (owner[j0] != 0);
    do {
      const Eigen::Index j1 = way[j0];
      owner[j0] = owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<Eigen::Index> match(n);
  for (Eigen::Index j = 1; j <= n; ++j) match[owner[j] - 1] = j - 1;
  return match;
}

}  // namespace klabc

#endif  // KLABC_ASSIGNMENT_HPP
