#pragma once
#include <mcf/core/linalg.h>
#include <vector>

namespace mcf {

/// Minimum-cost assignment for an n x m cost matrix with n <= m.
/// Returns the column assigned to each row.
std::vector<int> hungarian(const Mat &cost);

} // namespace mcf
