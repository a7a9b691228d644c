#pragma once

#include <Eigen/Dense>
#include <vector>

namespace fastslow {

struct AssignmentResult {
  std::vector<int> row_to_col;
  double total_cost = 0.0;
};

/// Exact dense linear assignment by the Jonker-Volgenant shortest augmenting
/// path algorithm (column reduction, reduction transfer, two augmenting row
/// reduction sweeps, then Dijkstra-style augmentation). O(n^3) worst case.
AssignmentResult solve_assignment(const Eigen::MatrixXd& cost);

}  // namespace fastslow
