#include "doctest.h"

#include "pathlaw/entropic.hpp"
#include "pathlaw/rng.hpp"

#include <cmath>

using namespace pathlaw;

namespace {

// Independent oracle: cyclic coordinate minimization of the entropic OT
// objective F(g) = eps * sum g log(g/K) - eps * sum g over the 3x3 (or 2x2)
// transportation polytope, parameterized by its free block. Exact 1-d steps
// by bisection on the (monotone) partial derivative.
struct PolytopeOracle {
  MatrixXd K;
  VectorXd a, b;
  double eps;
  MatrixXd gamma;

  explicit PolytopeOracle(const MatrixXd& kernel, const VectorXd& alpha, const VectorXd& beta,
                          double epsilon)
      : K(kernel), a(alpha), b(beta), eps(epsilon) {
    gamma = a * b.transpose() / b.sum();  // independent coupling is feasible
  }

  int n() const { return static_cast<int>(a.size()); }

  // adjust the cycle (i,j) (i,last) (last,j) (last,last) by t
  double cycle_derivative(int i, int j, double t) const {
    const int m = n() - 1;
    auto term = [&](int r, int c, double delta) {
      const double g = gamma(r, c) + delta;
      return std::log(g / K(r, c));
    };
    return eps * (term(i, j, t) - term(i, m, -t) - term(m, j, -t) + term(m, m, t));
  }

  void sweep() {
    const int m = n() - 1;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        double lo = -std::min(gamma(i, j), gamma(m, m));
        double hi = std::min(gamma(i, m), gamma(m, j));
        if (hi - lo < 1e-300) continue;
        // interior optimum: derivative is -inf at lo, +inf at hi
        for (int it = 0; it < 200; ++it) {
          const double mid = 0.5 * (lo + hi);
          if (cycle_derivative(i, j, mid) < 0.0) lo = mid; else hi = mid;
        }
        const double t = 0.5 * (lo + hi);
        gamma(i, j) += t;
        gamma(i, m) -= t;
        gamma(m, j) -= t;
        gamma(m, m) += t;
      }
  }

  double solve(int sweeps = 400) {
    for (int s = 0; s < sweeps; ++s) sweep();
    double f = 0.0;
    for (int i = 0; i < n(); ++i)
      for (int j = 0; j < n(); ++j) {
        const double g = gamma(i, j);
        if (g > 0.0) f += eps * g * std::log(g / K(i, j));
        f -= eps * g;
      }
    return f;
  }
};

Support random_support(int n, int d, CounterRng& rng) {
  MatrixXd pts(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) pts(i, j) = 2.0 * rng.uniform() - 1.0;
  return support_from_matrix(pts);
}

VectorXd random_simplex(int n, CounterRng& rng) {
  VectorXd w(n);
  for (int i = 0; i < n; ++i) w[i] = 0.05 + rng.uniform();
  return w / w.sum();
}

}  // namespace

TEST_CASE("sinkhorn on one point and on symmetric instances") {
  MatrixXd one(1, 1);
  one << 0.7;
  Support sup = support_from_matrix(one);
  GibbsKernel k = gibbs_kernel(sup, 0.3);
  Measure delta = Measure::probability(VectorXd::Ones(1));
  SinkhornResult r = sinkhorn(delta, delta, k);
  CHECK(r.coupling.entries(0, 0) == doctest::Approx(1.0).epsilon(1e-12));

  // two symmetric points, uniform marginals: coupling symmetric under swap
  MatrixXd sym(2, 1);
  sym << -1.0, 1.0;
  Support sup2 = support_from_matrix(sym);
  GibbsKernel k2 = gibbs_kernel(sup2, 0.7);
  Measure u = Measure::probability(VectorXd::Constant(2, 0.5));
  SinkhornResult r2 = sinkhorn(u, u, k2);
  CHECK(r2.coupling.entries(0, 0) == doctest::Approx(r2.coupling.entries(1, 1)).epsilon(1e-12));
  CHECK(r2.coupling.entries(0, 1) == doctest::Approx(r2.coupling.entries(1, 0)).epsilon(1e-12));
  CHECK(r2.violation <= 1e-9);
}

TEST_CASE("sinkhorn matches the brute-force polytope oracle") {
  for (int trial = 0; trial < 20; ++trial) {
    CounterRng rng(77, CounterRng::Purpose::Testing, trial);
    const int n = trial % 2 == 0 ? 3 : 2;
    Support sup = random_support(n, 2, rng);
    const double eps = 0.2 + 0.5 * rng.uniform();
    GibbsKernel k = gibbs_kernel(sup, eps);
    Measure alpha = Measure::probability(random_simplex(n, rng));
    Measure beta = Measure::probability(random_simplex(n, rng));

    SinkhornResult r = sinkhorn(alpha, beta, k);
    PolytopeOracle oracle(k.entries, alpha.weights, beta.weights, eps);
    const double oracle_value = oracle.solve();
    const double value = ot_eps_value(alpha, beta, k);

    CHECK(value == doctest::Approx(oracle_value).epsilon(1e-6));
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        CHECK(std::abs(r.coupling.entries(i, j) - oracle.gamma(i, j)) < 1e-6);
  }
}

TEST_CASE("sinkhorn rejects mass mismatch and reports non-convergence") {
  MatrixXd pts(2, 1);
  pts << 0.0, 1.0;
  Support sup = support_from_matrix(pts);
  GibbsKernel k = gibbs_kernel(sup, 0.5);
  Measure a = Measure::positive((VectorXd(2) << 0.5, 0.5).finished());
  Measure b = Measure::positive((VectorXd(2) << 0.7, 0.5).finished());
  CHECK_THROWS_AS(sinkhorn(a, b, k), InvalidInput);

  SinkhornOptions strict;
  strict.max_iter = 1;
  strict.tol = 1e-15;
  Measure c = Measure::positive((VectorXd(2) << 0.9, 0.1).finished());
  try {
    sinkhorn(a, c, k, strict);
    CHECK(false);
  } catch (const SinkhornFailure& f) {
    CHECK(f.last_violation > 1e-15);
  }
}

TEST_CASE("marginal violation decreases monotonically") {
  CounterRng rng(5, CounterRng::Purpose::Testing, 0);
  Support sup = random_support(6, 2, rng);
  GibbsKernel k = gibbs_kernel(sup, 0.25);
  Measure a = Measure::probability(random_simplex(6, rng));
  Measure b = Measure::probability(random_simplex(6, rng));
  SinkhornOptions opt;
  opt.tol = 1e-13;
  opt.max_iter = 2000;
  // run one iteration at a time from scratch and track the violation
  double prev = std::numeric_limits<double>::infinity();
  for (int iters = 1; iters <= 12; ++iters) {
    SinkhornOptions o;
    o.max_iter = iters;
    o.tol = 0.0;
    double viol;
    try {
      viol = sinkhorn(a, b, k, o).violation;
    } catch (const SinkhornFailure& f) {
      viol = f.last_violation;
    }
    CHECK(viol <= prev * (1.0 + 1e-12));
    prev = viol;
  }
}

TEST_CASE("ot_eps_value closed forms") {
  // single support point: value -eps
  MatrixXd one(1, 2);
  one << 0.3, -0.2;
  Support sup = support_from_matrix(one);
  const double eps = 0.37;
  GibbsKernel k = gibbs_kernel(sup, eps);
  Measure d = Measure::probability(VectorXd::Ones(1));
  CHECK(ot_eps_value(d, d, k) == doctest::Approx(-eps).epsilon(1e-12));

  // invariance under support relabeling
  CounterRng rng(9, CounterRng::Purpose::Testing, 1);
  Support s3 = random_support(3, 2, rng);
  Measure a = Measure::probability(random_simplex(3, rng));
  Measure b = Measure::probability(random_simplex(3, rng));
  GibbsKernel k3 = gibbs_kernel(s3, 0.4);
  const double v1 = ot_eps_value(a, b, k3);

  Eigen::PermutationMatrix<3> perm;
  perm.indices() << 2, 0, 1;
  Support s3p = support_from_matrix(perm * s3.points);
  GibbsKernel k3p = gibbs_kernel(s3p, 0.4);
  Measure ap = Measure::probability(perm * a.weights);
  Measure bp = Measure::probability(perm * b.weights);
  CHECK(ot_eps_value(ap, bp, k3p) == doctest::Approx(v1).epsilon(1e-10));
}

TEST_CASE("generalized KL closed forms and positivity") {
  VectorXd w(3);
  w << 0.2, 0.5, 0.1;
  Measure alpha = Measure::positive(w);
  CHECK(kl_generalized(alpha, alpha) == doctest::Approx(0.0).epsilon(1e-15));

  Measure twice = Measure::positive(2.0 * w);
  const double m = w.sum();
  CHECK(kl_generalized(twice, alpha) ==
        doctest::Approx(m * (2.0 * std::log(2.0) - 1.0)).epsilon(1e-12));

  // equal-mass inputs: KL equals the relative entropy H
  VectorXd w2(3);
  w2 << 0.4, 0.2, 0.2;
  Measure beta = Measure::positive(w2);
  CHECK(kl_generalized(alpha, beta) ==
        doctest::Approx(relative_entropy(alpha, beta)).epsilon(1e-12));

  // absolute continuity violation
  VectorXd z = w;
  z[1] = 0.0;
  CHECK(std::isinf(kl_generalized(alpha, Measure::positive(z))));

  // nonnegativity with equality only at identity
  CounterRng rng(11, CounterRng::Purpose::Testing, 2);
  for (int t = 0; t < 50; ++t) {
    VectorXd x(4), y(4);
    for (int i = 0; i < 4; ++i) {
      x[i] = rng.uniform() + 0.01;
      y[i] = rng.uniform() + 0.01;
    }
    const double kl = kl_generalized(Measure::positive(x), Measure::positive(y));
    CHECK(kl >= -1e-15);
    if ((x - y).lpNorm<Eigen::Infinity>() > 1e-3) CHECK(kl > 0.0);
  }
}

TEST_CASE("legendre transform values") {
  CounterRng rng(13, CounterRng::Purpose::Testing, 3);
  Support sup = random_support(4, 2, rng);
  const double eps = 0.3;
  GibbsKernel K = gibbs_kernel(sup, eps);
  GibbsKernel Kbar = gibbs_kernel(sup, eps, std::nullopt, true);
  LegendreContext ctx;
  ctx.kernel = &K;

  // OT at zero potentials: eps * sum K
  VectorXd zero = VectorXd::Zero(4);
  CHECK(legendre_value(LegendreKind::OT, zero, zero, ctx).value ==
        doctest::Approx(eps * K.entries.sum()).epsilon(1e-12));

  // OTN at zero with uniform pi0: the bracket sums to one, so the value
  // vanishes (the printed transform's extra e^{-1} offset would give -eps;
  // the exact transform of the probability-restricted cost drops it)
  LegendreContext nctx;
  nctx.kernel = &Kbar;
  nctx.pi0 = VectorXd::Constant(4, 0.25);
  CHECK(legendre_value(LegendreKind::OTN, zero, zero, nctx).value ==
        doctest::Approx(0.0).epsilon(1e-12));
  // OTU keeps the offset: value eps * e^{-1} at zero potentials
  CHECK(legendre_value(LegendreKind::OTU, zero, zero, nctx).value ==
        doctest::Approx(eps * std::exp(-1.0)).epsilon(1e-12));

  // KL2 at v = 0 vanishes for any data vector
  LegendreContext kctx;
  kctx.rho_hat = random_simplex(4, rng);
  CHECK(legendre_value(LegendreKind::KL2, zero, zero, kctx).value == 0.0);
  VectorXd bad = VectorXd::Constant(4, 1.5);
  CHECK(std::isinf(legendre_value(LegendreKind::KL2, zero, bad, kctx).value));
}

TEST_CASE("OTC constraint elimination holds for every v") {
  CounterRng rng(17, CounterRng::Purpose::Testing, 4);
  Support sup = random_support(5, 3, rng);
  GibbsKernel Kbar = gibbs_kernel(sup, 0.21, std::nullopt, true);
  LegendreContext ctx;
  ctx.kernel = &Kbar;
  for (int t = 0; t < 10; ++t) {
    VectorXd v(5);
    for (int i = 0; i < 5; ++i) v[i] = rng.normal() * 0.4;
    VectorXd u = otc_equality_map(Kbar, v);
    LegendreReport rep = legendre_value(LegendreKind::OTC, u, v, ctx);
    CHECK(rep.feasible);
    CHECK((u - rep.induced).lpNorm<Eigen::Infinity>() <= 1e-12);
    // raising u anywhere breaks feasibility
    VectorXd u_bad = u;
    u_bad[t % 5] += 1e-6;
    CHECK_FALSE(legendre_value(LegendreKind::OTC, u_bad, v, ctx).feasible);
  }
}

TEST_CASE("weak duality holds per transform row") {
  CounterRng rng(19, CounterRng::Purpose::Testing, 5);
  const int n = 3;
  Support sup = random_support(n, 2, rng);
  const double eps = 0.45;
  GibbsKernel K = gibbs_kernel(sup, eps);
  GibbsKernel Kbar = gibbs_kernel(sup, eps, std::nullopt, true);
  const VectorXd pi0 = VectorXd::Constant(n, 1.0 / n);

  for (int t = 0; t < 25; ++t) {
    VectorXd u(n), v(n);
    for (int i = 0; i < n; ++i) {
      u[i] = 0.5 * rng.normal();
      v[i] = 0.5 * rng.normal();
    }
    Measure alpha = Measure::probability(random_simplex(n, rng));
    Measure beta = Measure::probability(random_simplex(n, rng));

    // OT row
    {
      LegendreContext ctx;
      ctx.kernel = &K;
      const double fstar = legendre_value(LegendreKind::OT, u, v, ctx).value;
      const double f = ot_eps_value(alpha, beta, K);
      CHECK(u.dot(alpha.weights) + v.dot(beta.weights) - f <= fstar + 1e-9);
    }
    // OTN row (probability arguments)
    {
      LegendreContext ctx;
      ctx.kernel = &Kbar;
      ctx.pi0 = pi0;
      const double fstar = legendre_value(LegendreKind::OTN, u, v, ctx).value;
      GibbsKernel ref = Kbar;
      ref.entries.array().colwise() *= pi0.array();
      ref.log_entries.array().colwise() += pi0.array().log();
      SinkhornResult sr = sinkhorn(alpha, beta, ref);
      const double f = sr.potentials.u.dot(sr.coupling.first_marginal()) +
                       sr.potentials.v.dot(sr.coupling.second_marginal());
      CHECK(u.dot(alpha.weights) + v.dot(beta.weights) - f <= fstar + 1e-9);
    }
    // KL2 row (dual of the second argument)
    {
      LegendreContext ctx;
      ctx.rho_hat = alpha.weights;
      VectorXd w = v.cwiseMin(0.9);  // keep inside the domain
      const double fstar = legendre_value(LegendreKind::KL2, VectorXd(), w, ctx).value;
      const double f = kl_generalized(Measure::positive(alpha.weights), beta);
      CHECK(w.dot(beta.weights) - f <= fstar + 1e-9);
    }
    // HB row: feasible dual pairs pair to exactly zero on feasible primals
    {
      VectorXd g = VectorXd::Constant(n, 1.3);
      VectorXd phi = branching_phi(v, g, std::numeric_limits<double>::infinity());
      const VectorXd grown = g.array() * alpha.weights.array();
      CHECK(std::abs(phi.dot(alpha.weights) + v.dot(grown)) <= 1e-12);
    }
    // SB row
    {
      const double kappa = 2.0;
      VectorXd g = VectorXd::Constant(n, 1.1);
      VectorXd psi = v.cwiseMin(kappa - 0.1);
      VectorXd phi = branching_phi(psi, g, kappa);
      const double f =
          kappa * kl_generalized(beta, Measure::positive(g.array() * alpha.weights.array()));
      CHECK(phi.dot(alpha.weights) + psi.dot(beta.weights) - f <= 1e-9);
    }
  }
}

TEST_CASE("primal-dual consistency for the OT row") {
  CounterRng rng(23, CounterRng::Purpose::Testing, 6);
  Support sup = random_support(4, 2, rng);
  const double eps = 0.3;
  GibbsKernel K = gibbs_kernel(sup, eps);
  Measure alpha = Measure::probability(random_simplex(4, rng));
  Measure beta = Measure::probability(random_simplex(4, rng));
  SinkhornResult sr = sinkhorn(alpha, beta, K);

  // rebuild the coupling from the potentials and evaluate the primal directly
  MatrixXd gamma = (sr.potentials.u / eps).array().exp().matrix().asDiagonal() * K.entries *
                   (sr.potentials.v / eps).array().exp().matrix().asDiagonal();
  double value = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      value += eps * gamma(i, j) * std::log(gamma(i, j) / K.entries(i, j));
      value -= eps * gamma(i, j);
    }
  CHECK(value == doctest::Approx(ot_eps_value(alpha, beta, K)).epsilon(1e-6));
}
