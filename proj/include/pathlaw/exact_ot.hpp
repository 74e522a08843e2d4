#pragma once

#include <Eigen/Core>
#include <vector>

namespace pathlaw {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Exact (unregularized) transportation cost between nonnegative weight
// vectors a (n1) and b (n2) under a dense cost matrix, solved by network
// simplex on the complete bipartite graph. Masses must match to 1e-9
// relative. Returns sum_ij plan_ij * cost_ij.
double network_simplex_transport(const VectorXd& a, const VectorXd& b, const MatrixXd& cost,
                                 std::vector<std::array<double, 3>>* plan_triplets = nullptr);

// Exact assignment cost: min over permutations of sum_i cost(i, perm(i)).
// Jonker-Volgenant style shortest augmenting paths.
double hungarian_assignment(const MatrixXd& cost, std::vector<int>* assignment = nullptr);

}  // namespace pathlaw
