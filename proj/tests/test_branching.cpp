#include "doctest.h"

#include "pathlaw/branching.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace pathlaw;
using namespace pathlaw::testutil;

TEST_CASE("growth factors from rate estimates") {
  CounterRng rng(1, CounterRng::Purpose::Testing, 0);
  Support sup = random_support(6, 4, rng);
  VectorXd dts = VectorXd::Constant(3, 0.2);

  GrowthSpec null = GrowthSpec::null();
  CHECK((growth_factors(null, sup, dts).array() == 1.0).all());

  // beta = delta everywhere cancels
  GrowthSpec even;
  even.beta_est = [](const VectorXd& x) { return 1.0 + x[0]; };
  even.delta_est = even.beta_est;
  CHECK((growth_factors(even, sup, dts).array() == 1.0).all());

  // beta - delta = 5 over dt = 0.2 gives e
  GrowthSpec net5;
  net5.beta_est = [](const VectorXd&) { return 7.0; };
  net5.delta_est = [](const VectorXd&) { return 2.0; };
  MatrixXd g = growth_factors(net5, sup, dts);
  CHECK(g(0, 0) == doctest::Approx(std::exp(1.0)).epsilon(1e-14));

  // gated birth rate at the far well evaluates near its plateau
  VectorXd x0 = VectorXd::Zero(4);
  x0[0] = x0[1] = 1.15;
  GrowthSpec gate;
  gate.beta_est = [](const VectorXd& x) { return 5.0 * (std::tanh(2.0 * x[0]) + 1.0) / 2.0; };
  gate.delta_est = [](const VectorXd&) { return 0.0; };
  CHECK(gate.beta_est(x0) == doctest::Approx(4.95024).epsilon(1e-5));
  MatrixXd sup1(1, 4);
  sup1.row(0) = x0.transpose();
  MatrixXd gg = growth_factors(gate, support_from_matrix(sup1), dts);
  CHECK(gg(0, 0) == doctest::Approx(std::exp(0.2 * gate.beta_est(x0))).epsilon(1e-12));

  GrowthSpec bad;
  bad.beta_est = [](const VectorXd&) { return std::numeric_limits<double>::quiet_NaN(); };
  bad.delta_est = [](const VectorXd&) { return 0.0; };
  CHECK_THROWS_AS(growth_factors(bad, sup, dts), InvalidInput);
}

TEST_CASE("mass estimation chains growth ratios") {
  SpecParams p;
  p.T = 4;
  p.n = 5;
  p.seed = 7;
  ProblemSpec spec = random_spec(p);
  SolverOptions opt;
  opt.gap_tol = 1e-8;

  // null growth: all ratios are one
  VectorXd m = estimate_masses(spec, GrowthSpec::null(), opt);
  CHECK((m.array() - 1.0).abs().maxCoeff() <= 1e-12);

  // constant growth factor per gap: m_{i+1}/m_i is that factor exactly
  GrowthSpec constant;
  constant.beta_est = [](const VectorXd&) { return 2.0; };
  constant.delta_est = [](const VectorXd&) { return 0.5; };
  VectorXd mc = estimate_masses(spec, constant, opt);
  for (int i = 0; i < 4; ++i) {
    double expect = 1.0;
    for (int g = 0; g < i; ++g) expect *= std::exp(1.5 * spec.dt(g));
    CHECK(mc[i] == doctest::Approx(expect).epsilon(1e-10));
  }

  // monotone-increasing growth gives nondecreasing masses
  GrowthSpec rising;
  rising.beta_est = [](const VectorXd& x) { return 1.0 + std::tanh(x[0]); };
  rising.delta_est = [](const VectorXd&) { return 0.0; };
  VectorXd mr = estimate_masses(spec, rising, opt);
  for (int i = 0; i + 1 < 4; ++i) CHECK(mr[i + 1] >= mr[i]);

  // scale consistency: multiplying g by c multiplies each ratio by c exactly
  GrowthSpec scaled;
  scaled.beta_est = [](const VectorXd& x) { return 1.0 + std::tanh(x[0]) + 3.0; };
  scaled.delta_est = [](const VectorXd&) { return 0.0; };
  VectorXd ms = estimate_masses(spec, scaled, opt);
  for (int i = 0; i + 1 < 4; ++i) {
    const double c = std::exp(3.0 * spec.dt(i));
    CHECK(ms[i + 1] / ms[i] == doctest::Approx(c * mr[i + 1] / mr[i]).epsilon(1e-10));
  }
}
