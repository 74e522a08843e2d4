#pragma once

#include "pathlaw/solver.hpp"

#include <functional>

namespace pathlaw {

// Birth/death-rate estimates used to build per-gap growth factors.
struct GrowthSpec {
  std::function<double(const VectorXd&)> beta_est;   // birth rate (1/time)
  std::function<double(const VectorXd&)> delta_est;  // death rate (1/time)
  double kappa = std::numeric_limits<double>::infinity();  // +inf = exact constraint

  static GrowthSpec null() {
    GrowthSpec g;
    g.beta_est = [](const VectorXd&) { return 0.0; };
    g.delta_est = [](const VectorXd&) { return 0.0; };
    return g;
  }
};

// g_{ij} = exp(dt_i * (beta(x_j) - delta(x_j))), one row per gap.
MatrixXd growth_factors(const GrowthSpec& gs, const Support& support, const VectorXd& dts);

// Two-pass relative-mass estimation: solve once with g == 1, m == 1 and a
// soft constraint (kappa = 10), then chain the per-time growth ratios.
VectorXd estimate_masses(const ProblemSpec& spec_without_growth, const GrowthSpec& gs,
                         const SolverOptions& opt = {});

}  // namespace pathlaw
