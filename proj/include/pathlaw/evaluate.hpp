#pragma once

#include "pathlaw/entropic.hpp"
#include "pathlaw/exact_ot.hpp"

namespace pathlaw {

// Exact 2-Wasserstein distance between weighted point clouds (ground cost
// ||x - y||^2). Weights are normalized to unit mass after an equal-mass
// check; zero atoms are dropped. Uses the assignment fast path when both
// sides are uniform with equal atom counts.
double w2_exact(const VectorXd& wa, const MatrixXd& a_points, const VectorXd& wb,
                const MatrixXd& b_points);
double w2_exact(const Measure& alpha, const Measure& beta, const Support& coords);

// Empirical W2 between path collections given as flat rows
// [x(t_1),...,x(t_T)]; path cost (1/T) sum_k ||f_ik - g_jk||^2.
double w2_paths_empirical(const MatrixXd& flat_a, const MatrixXd& flat_b, int num_times);

struct PathDistanceStats {
  std::vector<double> values;
  double mean = 0.0;
  double sd = 0.0;
};
PathDistanceStats summarize(const std::vector<double>& values);

// Mean over points of (1 - cos angle)/2 between estimated and true fields;
// 0 = aligned, 1 = anti-aligned. Points with a zero vector on either side
// are skipped and counted.
double drift_similarity(const MatrixXd& v_hat, const MatrixXd& v_true,
                        const std::vector<char>& defined, int* skipped = nullptr);

}  // namespace pathlaw
