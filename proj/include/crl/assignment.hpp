#pragma once

#include <Eigen/Dense>

#include <limits>
#include <vector>

#include "crl/error.hpp"

namespace crl {

/// Maximum-weight perfect matching on a square weight matrix (Hungarian
/// method, O(n³)). Returns, for each row, the column assigned to it.
inline std::vector<int> max_weight_assignment(const Eigen::MatrixXd& weights) {
  const int n = static_cast<int>(weights.rows());
  if (weights.cols() != n) {
    throw Error(ErrorKind::InvalidInput, "assignment weight matrix must be square");
  }
  if (!weights.allFinite()) {
    throw Error(ErrorKind::InvalidInput, "assignment weights must be finite");
  }
  constexpr double kInf = std::numeric_limits<double>::infinity();
  // Minimize the negated weights; arrays are 1-based with 0 as a sentinel.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::vector<double> minv(n + 1, kInf);
    std::vector<char> used(n + 1, false);
    do {
      used[j0] = true;
      const int i0 = match[j0];
      double delta = kInf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = -weights(i0 - 1, j - 1) - u[i0] - v[j];
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
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j) {
    if (match[j] != 0) row_to_col[match[j] - 1] = j - 1;
  }
  return row_to_col;
}

}  // namespace crl
