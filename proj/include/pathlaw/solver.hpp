#pragma once

#include "pathlaw/entropic.hpp"
#include "pathlaw/pairwise.hpp"

#include <functional>
#include <memory>
#include <optional>

namespace pathlaw {

// Full parameterization of the discrete global-regression objective over a
// fixed support: marginal series are recovered by maximizing its concave
// dual in the free potentials {u_hat_i, v_hat_i}.
struct ProblemSpec {
  Support support;
  VectorXd times;          // strictly increasing, size T >= 2
  MatrixXd data;           // T x n, each row an empirical probability vector
  double sigma2 = 1.0;     // diffusivity
  double lambda = 1e-2;    // regularization strength
  VectorXd eps_df;         // T, data-fitting entropic scale
  VectorXd weights;        // T, positive, sums to 1
  VectorXd lambda_df;      // T, cross-entropy coefficients
  VectorXd masses;         // T, relative-mass estimates m_i
  MatrixXd growth;         // (T-1) x n, per-gap per-point factors g_i(x)
  VectorXd kappa;          // T-1, soft-branching penalty, +inf = exact constraint
  VectorXd pi0;            // n, reference initial distribution
  VectorXd reg_cost_scale; // T-1, per-gap cost normalization (default 1)
  VectorXd df_cost_scale;  // T, per-time cost normalization (default 1)

  int num_times() const { return static_cast<int>(times.size()); }
  int support_size() const { return support.size(); }
  double dt(int gap) const { return times[gap + 1] - times[gap]; }
  bool hard_branching(int gap) const { return std::isinf(kappa[gap]); }

  void validate() const;

  // Uniform defaults for everything the caller leaves empty.
  static ProblemSpec build(Support support, VectorXd times, MatrixXd data,
                           double sigma2, double lambda, double eps_df_value = 0.025,
                           double lambda_df_value = 1.0);
};

struct DualState {
  MatrixXd u_hat;  // T x n
  MatrixXd v_hat;  // T x n

  static DualState zeros(int T, int n) {
    return DualState{MatrixXd::Zero(T, n), MatrixXd::Zero(T, n)};
  }
};

// Auxiliary variables defined by the dual recurrence; rows follow the
// 1-based convention of the relations: u, v, phi rows 0..T-2 stand for
// indices 1..T-1, psi rows 0..T-2 stand for indices 2..T.
struct AuxiliaryChain {
  MatrixXd u, v, phi, psi;
  bool feasible = true;  // soft-branching domain held everywhere
};

// gamma_jk = exp(lrow_j + lcol_k - 0.5*||x_j - x_k||^2 * inv_eps)
struct LogCoupling {
  VectorXd lrow, lcol;
  double inv_eps = 1.0;
};

struct Reconstruction {
  std::shared_ptr<const PairwiseOps> ops;
  VectorXd times;
  std::vector<VectorXd> marginals;         // R_{t_i}, feasible propagated chain
  std::vector<VectorXd> intermediates;     // Rbar_{t_{i+1}}
  std::vector<VectorXd> data_marginals;    // first marginals of data couplings
  std::vector<VectorXd> data_fit_marginals;  // Rhat_{t_i}
  std::vector<LogCoupling> transport;      // T-1 transport couplings
  std::vector<LogCoupling> data_couplings; // T data couplings
  MatrixXd growth;                         // copied from the spec for downstream checks
  double primal_value = 0.0;
  double dual_value = 0.0;
  double gap = 0.0;
  bool converged = false;
  int iterations = 0;

  MatrixXd dense_transport(int gap) const;       // small-support convenience
  MatrixXd dense_data_coupling(int i) const;
};

struct SolverOptions {
  double gap_tol = 1e-5;
  double grad_tol = 1e-9;
  int max_iter = 5000;
  int history = 10;
  int gap_check_every = 10;
  int threads = 1;
  std::optional<DualState> init;
  bool verbose = false;
  // invoked at every accepted iterate with the current dual value
  std::function<void(int, double)> on_iterate;
};

struct SolveResult {
  DualState state;
  Reconstruction reconstruction;
  double dual_value = 0.0;
  double primal_value = 0.0;
  double gap = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

// Chain of auxiliary variables for a given dual state (throws on soft-domain
// violation only if check_feasible; otherwise marks the chain infeasible).
AuxiliaryChain auxiliary_chain(const DualState& state, const ProblemSpec& spec);

// Concave dual objective; -inf on domain violations.
double dual_objective(const DualState& state, const ProblemSpec& spec);

// Exact gradient by reverse accumulation through the recurrence. Throws on
// boundary states.
DualState dual_gradient(const DualState& state, const ProblemSpec& spec);

// Quasi-Newton ascent with a primal-dual-gap stopping rule.
SolveResult solve(const ProblemSpec& spec, const SolverOptions& opt = {});

// Primal quantities from the closed-form optimality relations.
Reconstruction recover_primal(const DualState& state, const ProblemSpec& spec,
                              int threads = 1);

// Independent primal evaluation: every transport term re-solved by Sinkhorn
// at its epsilon, branching terms by their penalty. +inf on an infeasible
// reconstruction under the exact constraint.
double primal_objective(const Reconstruction& rec, const ProblemSpec& spec);

}  // namespace pathlaw
