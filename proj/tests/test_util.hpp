#pragma once

#include "pathlaw/rng.hpp"
#include "pathlaw/solver.hpp"

namespace pathlaw::testutil {

inline Support random_support(int n, int d, CounterRng& rng, double scale = 1.0) {
  MatrixXd pts(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) pts(i, j) = scale * (2.0 * rng.uniform() - 1.0);
  return support_from_matrix(pts);
}

inline VectorXd random_simplex(int n, CounterRng& rng) {
  VectorXd w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.05 + rng.uniform();
  return w / w.sum();
}

// sparse empirical-style probability row charging `atoms` points
inline VectorXd random_data_row(int n, int atoms, CounterRng& rng) {
  VectorXd w = VectorXd::Zero(n);
  for (int a = 0; a < atoms; ++a) w[static_cast<int>(rng.uniform_index(n))] += 1.0;
  return w / w.sum();
}

struct SpecParams {
  int T = 3;
  int n = 5;
  int d = 2;
  std::uint64_t seed = 0;
  bool branching = false;
  double kappa = std::numeric_limits<double>::infinity();
  double lambda = 5e-2;
  double sigma2 = 0.5;
  double eps_df = 0.1;
};

inline ProblemSpec random_spec(const SpecParams& p) {
  CounterRng rng(p.seed, CounterRng::Purpose::Testing, 1000 + p.T * 131 + p.n);
  Support sup = random_support(p.n, p.d, rng);
  VectorXd times(p.T);
  times[0] = 0.0;
  for (int i = 1; i < p.T; ++i) times[i] = times[i - 1] + 0.2 + 0.3 * rng.uniform();
  MatrixXd data(p.T, p.n);
  for (int i = 0; i < p.T; ++i) data.row(i) = random_simplex(p.n, rng).transpose();
  ProblemSpec spec = ProblemSpec::build(sup, times, data, p.sigma2, p.lambda, p.eps_df);
  if (p.branching) {
    for (int g = 0; g < p.T - 1; ++g)
      for (int j = 0; j < p.n; ++j) spec.growth(g, j) = std::exp(0.5 * (rng.uniform() - 0.3));
    spec.kappa = VectorXd::Constant(p.T - 1, p.kappa);
    for (int i = 0; i < p.T; ++i) spec.masses[i] = 0.8 + 0.4 * rng.uniform();
    spec.masses[0] = 1.0;
  }
  spec.validate();
  return spec;
}

inline DualState random_state(const ProblemSpec& spec, std::uint64_t seed, double scale = 0.1) {
  CounterRng rng(seed, CounterRng::Purpose::Testing, 7777);
  const int T = spec.num_times();
  const int n = spec.support_size();
  DualState st = DualState::zeros(T, n);
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < n; ++j) {
      st.u_hat(i, j) = scale * rng.normal();
      st.v_hat(i, j) = scale * rng.normal();
    }
  return st;
}

}  // namespace pathlaw::testutil
