#include "gdmd/assignment.hpp"

#include <limits>

namespace gdmd {

namespace {

// Potentials-based O(r^2 c) solver for r <= c, 1-based internally.
std::vector<int> solve_wide(const Mat& a) {
  const int r = static_cast<int>(a.rows());
  const int c = static_cast<int>(a.cols());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(r + 1, 0.0), v(c + 1, 0.0);
  std::vector<int> p(c + 1, 0), way(c + 1, 0);

  for (int i = 1; i <= r; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(c + 1, inf);
    std::vector<bool> used(c + 1, false);
    do {
      used[j0] = true;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= c; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= c; ++j) {
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

  std::vector<int> match(static_cast<std::size_t>(r), -1);
  for (int j = 1; j <= c; ++j)
    if (p[j] != 0) match[static_cast<std::size_t>(p[j] - 1)] = j - 1;
  return match;
}

}  // namespace

std::vector<int> min_cost_assignment(const Mat& cost) {
  if (cost.size() == 0) return std::vector<int>(static_cast<std::size_t>(cost.rows()), -1);
  if (!cost.allFinite())
    throw Error(ErrorCode::InvalidArgument, "assignment: non-finite cost");
  if (cost.rows() <= cost.cols()) return solve_wide(cost);

  const std::vector<int> by_col = solve_wide(cost.transpose());
  std::vector<int> match(static_cast<std::size_t>(cost.rows()), -1);
  for (std::size_t j = 0; j < by_col.size(); ++j)
    if (by_col[j] >= 0) match[static_cast<std::size_t>(by_col[j])] = static_cast<int>(j);
  return match;
}

std::vector<int> max_score_assignment(const Mat& score) { return min_cost_assignment(-score); }

}  // namespace gdmd
