#pragma once

#include "pathlaw/solver.hpp"

namespace pathlaw {

// Composed Markov law on the support: initial marginal plus per-gap
// transition kernels, kept in softmax form (row j of gap g is
// softmax_k(lcol_k - C0_jk * inv_eps), the conditional of the transport
// coupling given being at j). Branching factors are excluded so sample
// paths follow the descendant-at-random law.
struct MarkovPathLaw {
  std::shared_ptr<const PairwiseOps> ops;
  VectorXd times;
  VectorXd initial;                 // probability weights on the support
  std::vector<VectorXd> trans_lcol; // per gap
  std::vector<double> trans_inv_eps;

  int num_times() const { return static_cast<int>(times.size()); }
  VectorXd transition_row(int gap, int state) const;
  // push a distribution through the gap's kernel
  VectorXd propagate(int gap, const VectorXd& marginal) const;
};

struct PathEnsemble {
  Eigen::MatrixXi states;  // n_paths x T, support indices
  VectorXd times;

  int num_paths() const { return static_cast<int>(states.rows()); }
  // flat coordinates, one path per row: [x(t_1), ..., x(t_T)] of length T*d
  MatrixXd flat_coords(const Support& support) const;
};

MarkovPathLaw compose_markov(const Reconstruction& rec, double consistency_tol = 1e-6);

PathEnsemble sample_paths(const MarkovPathLaw& law, int n, std::uint64_t seed);

struct DriftField {
  MatrixXd velocity;          // n x d
  std::vector<char> defined;  // per support point
};

// Conditional-mean drift from the transport couplings; averaged over the
// time-points where the point carries mass (> 1e-12), or per-gap fields.
DriftField estimate_drift(const Reconstruction& rec, bool average_over_time = true,
                          bool mass_weighted = false);
std::vector<DriftField> estimate_drift_per_time(const Reconstruction& rec);

}  // namespace pathlaw
