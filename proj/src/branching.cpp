#include "pathlaw/branching.hpp"

namespace pathlaw {

MatrixXd growth_factors(const GrowthSpec& gs, const Support& support, const VectorXd& dts) {
  const int n = support.size();
  const int gaps = static_cast<int>(dts.size());
  MatrixXd g(gaps, n);
  VectorXd net(n);
  for (int j = 0; j < n; ++j) {
    const VectorXd x = support.points.row(j).transpose();
    const double b = gs.beta_est(x);
    const double d = gs.delta_est(x);
    if (!std::isfinite(b) || !std::isfinite(d))
      throw InvalidInput("growth_factors: rates must be finite");
    net[j] = b - d;
  }
  for (int i = 0; i < gaps; ++i) {
    if (!(dts[i] > 0)) throw InvalidInput("growth_factors: time steps must be positive");
    g.row(i) = (dts[i] * net.array()).exp();
  }
  return g;
}

VectorXd estimate_masses(const ProblemSpec& spec_without_growth, const GrowthSpec& gs,
                         const SolverOptions& opt) {
  ProblemSpec pass1 = spec_without_growth;
  const int T = pass1.num_times();
  const int n = pass1.support_size();
  pass1.growth = MatrixXd::Ones(T - 1, n);
  pass1.masses = VectorXd::Ones(T);
  pass1.kappa = VectorXd::Constant(T - 1, 10.0);

  SolveResult res = solve(pass1, opt);
  if (!res.converged)
    throw InvalidInput("estimate_masses: first-pass solve did not converge");

  VectorXd dts(T - 1);
  for (int g = 0; g < T - 1; ++g) dts[g] = pass1.dt(g);
  const MatrixXd g = growth_factors(gs, pass1.support, dts);

  VectorXd m(T);
  m[0] = 1.0;
  for (int i = 0; i < T - 1; ++i) {
    const VectorXd& r = res.reconstruction.marginals[i];
    const double denom = r.sum();
    if (!(denom > 0)) throw InvalidInput("estimate_masses: empty recovered marginal");
    const double ratio = (g.row(i).transpose().array() * r.array()).sum() / denom;
    m[i + 1] = m[i] * ratio;
  }
  return m;
}

}  // namespace pathlaw
