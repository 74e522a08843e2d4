#pragma once

#include "pathlaw/geometry.hpp"

#include <limits>

namespace pathlaw {

enum class MeasureKind { Probability, Positive };

// Weighted measure on a shared discrete support.
struct Measure {
  VectorXd weights;
  MeasureKind kind = MeasureKind::Positive;

  double mass() const { return weights.sum(); }
  static Measure probability(VectorXd w);
  static Measure positive(VectorXd w);
};

struct Coupling {
  MatrixXd entries;
  VectorXd first_marginal() const { return entries.rowwise().sum(); }
  VectorXd second_marginal() const { return entries.colwise().sum(); }
};

struct DualPotentialPair {
  VectorXd u, v;
};

struct SinkhornFailure : std::runtime_error {
  double last_violation;
  SinkhornFailure(const std::string& what, double viol)
      : std::runtime_error(what), last_violation(viol) {}
};

struct SinkhornOptions {
  double tol = 1e-9;          // L-inf marginal violation
  int max_iter = 10000;
  bool eps_annealing = false; // warm-start through a decreasing epsilon ladder
};

struct SinkhornResult {
  Coupling coupling;
  DualPotentialPair potentials;
  double violation = 0.0;
  int iterations = 0;
};

// Log-domain Sinkhorn against the (possibly row-normalized) Gibbs kernel.
// Coupling = diag(a) K diag(b); potentials returned as u = eps*log a,
// v = eps*log b.
SinkhornResult sinkhorn(const Measure& alpha, const Measure& beta,
                        const GibbsKernel& kernel, const SinkhornOptions& opt = {});

// Optimal value eps*H(gamma|K) - eps*<1x1, gamma> of the discrete entropic
// OT problem, computed from the Sinkhorn solution.
double ot_eps_value(const Measure& alpha, const Measure& beta,
                    const GibbsKernel& kernel, const SinkhornOptions& opt = {});

// KL divergence generalized to positive measures:
// sum a log(a/b) - sum a + sum b, with 0 log 0 = 0. Returns +inf when alpha
// charges a point beta does not.
double kl_generalized(const Measure& alpha, const Measure& beta);

// Relative entropy H(alpha|beta) = sum a log(a/b) for same-mass inputs.
double relative_entropy(const Measure& alpha, const Measure& beta);

// ---- Closed-form Legendre transforms ----------------------------------
//
// Value rows (OT, OTU, OTN, KL2) evaluate the transform; indicator rows
// (OTC, SB, HB) report feasibility of the dual constraint and expose the
// induced equality map that the solver works on.

enum class LegendreKind { OT, OTU, OTN, OTC, KL2, SB, HB };

struct LegendreContext {
  const GibbsKernel* kernel = nullptr;  // OT/OTU/OTN/OTC (OTU/OTN/OTC expect row-normalized)
  VectorXd pi0;                          // OTU/OTN
  VectorXd rho_hat;                      // KL2
  VectorXd growth;                       // SB/HB (g)
  double kappa = std::numeric_limits<double>::infinity();  // SB
};

struct LegendreReport {
  double value = 0.0;        // value rows; 0 for feasible indicator rows, +inf otherwise
  bool feasible = true;      // indicator rows
  VectorXd induced;          // equality map output (OTC: u from v; SB/HB: phi from psi)
};

LegendreReport legendre_value(LegendreKind kind, const VectorXd& u, const VectorXd& v,
                              const LegendreContext& ctx);

// Equality maps used by the solver chain (also reachable via legendre_value).
// otc_map: u = -eps log(Kbar exp(v/eps)).
VectorXd otc_equality_map(const GibbsKernel& row_normalized_kernel, const VectorXd& v);
// hard branching: phi = -g .* psi ; soft: phi = kappa g .* log(1 - psi/kappa).
VectorXd branching_phi(const VectorXd& psi, const VectorXd& g, double kappa);

}  // namespace pathlaw
