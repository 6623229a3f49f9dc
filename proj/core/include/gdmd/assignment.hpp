#pragma once

// Rectangular linear assignment (Hungarian / Kuhn-Munkres with potentials).

#include "gdmd/common.hpp"

#include <vector>

namespace gdmd {

/// Minimizes sum_i cost(i, match[i]) over injective row -> column maps when
/// rows <= cols, or column -> row maps otherwise. match[i] is the column
/// assigned to row i, or -1 for rows left unmatched (only when rows > cols).
std::vector<int> min_cost_assignment(const Mat& cost);

/// Same, maximizing the total score.
std::vector<int> max_score_assignment(const Mat& score);

}  // namespace gdmd
