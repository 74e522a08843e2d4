#include "pathlaw/entropic.hpp"

#include <cmath>

namespace pathlaw {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// logsumexp of (logK_row + z) over one dense row.
double lse_row(const Eigen::Ref<const Eigen::RowVectorXd>& log_row, const VectorXd& z) {
  const int n = static_cast<int>(z.size());
  double m = -kInf;
  for (int k = 0; k < n; ++k) {
    const double t = log_row[k] + z[k];
    if (t > m) m = t;
  }
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (int k = 0; k < n; ++k) {
    const double t = log_row[k] + z[k] - m;
    if (t >= -45.0) s += std::exp(t);
  }
  return m + std::log(s);
}

void check_same_mass(const Measure& a, const Measure& b) {
  if (std::abs(a.mass() - b.mass()) > 1e-9 * std::max(1.0, std::abs(a.mass())))
    throw InvalidInput("sinkhorn: marginal masses differ");
}

}  // namespace

Measure Measure::probability(VectorXd w) {
  Measure m{std::move(w), MeasureKind::Probability};
  if (std::abs(m.weights.sum() - 1.0) > 1e-9)
    throw InvalidInput("Measure::probability: weights do not sum to 1");
  if ((m.weights.array() < 0).any()) throw InvalidInput("Measure: negative weight");
  return m;
}

Measure Measure::positive(VectorXd w) {
  Measure m{std::move(w), MeasureKind::Positive};
  if ((m.weights.array() < 0).any() || !m.weights.allFinite())
    throw InvalidInput("Measure: weights must be finite and nonnegative");
  return m;
}

SinkhornResult sinkhorn(const Measure& alpha, const Measure& beta,
                        const GibbsKernel& kernel, const SinkhornOptions& opt) {
  check_same_mass(alpha, beta);
  const int n = static_cast<int>(kernel.entries.rows());
  if (alpha.weights.size() != n || beta.weights.size() != n)
    throw InvalidInput("sinkhorn: measure/kernel size mismatch");
  const double eps = kernel.epsilon;

  // exact log kernel; falls back to elementwise logs for hand-built kernels
  MatrixXd logK = kernel.log_entries.size() == kernel.entries.size()
                      ? kernel.log_entries
                      : MatrixXd(kernel.entries.array().log());
  VectorXd log_a = alpha.weights.array().log();  // -inf on empty atoms
  VectorXd log_b = beta.weights.array().log();

  VectorXd f = VectorXd::Zero(n), g = VectorXd::Zero(n);  // log scalings
  VectorXd row_lse(n), col_lse(n);

  int total_iters = 0;
  double viol = kInf;

  std::vector<double> eps_ladder{eps};
  if (opt.eps_annealing) {
    double e = eps;
    while (e < 1.0) {
      e *= 4.0;
      eps_ladder.push_back(e);
    }
  }
  // logK scaling between ladder stages: logK_e = logK * (eps/e)
  for (auto it = eps_ladder.rbegin(); it != eps_ladder.rend(); ++it) {
    const double stage_eps = *it;
    MatrixXd stage_logK = logK * (eps / stage_eps);
    const bool final_stage = (stage_eps == eps);
    // rescale potentials so exp(f + lse) stays continuous across stages
    auto stage_lse = [&](int i, const VectorXd& z) { return lse_row(stage_logK.row(i), z); };
    const int stage_cap = final_stage ? opt.max_iter : std::min(200, opt.max_iter);
    for (int iter = 0; iter < stage_cap; ++iter) {
      for (int i = 0; i < n; ++i) row_lse[i] = stage_lse(i, g);
      f = (log_a - row_lse).cwiseMax(-1e300);
      for (int j = 0; j < n; ++j) col_lse[j] = lse_row(stage_logK.col(j).transpose(), f);
      g = (log_b - col_lse).cwiseMax(-1e300);
      ++total_iters;
      // row violation after the column update
      viol = 0.0;
      for (int i = 0; i < n; ++i) {
        const double lr = stage_lse(i, g);
        const double r = std::isfinite(f[i] + lr) ? std::exp(f[i] + lr) : 0.0;
        viol = std::max(viol, std::abs(r - alpha.weights[i]));
      }
      if (viol <= (final_stage ? opt.tol : 1e-4)) break;
    }
  }
  if (viol > opt.tol)
    throw SinkhornFailure("sinkhorn: did not reach tolerance", viol);

  SinkhornResult res;
  res.iterations = total_iters;
  res.violation = viol;
  res.coupling.entries.resize(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double t = f[i] + g[j] + logK(i, j);
      res.coupling.entries(i, j) = std::isfinite(t) ? std::exp(t) : 0.0;
    }
  res.potentials.u = eps * f;
  res.potentials.v = eps * g;
  return res;
}

double ot_eps_value(const Measure& alpha, const Measure& beta,
                    const GibbsKernel& kernel, const SinkhornOptions& opt) {
  SinkhornResult r = sinkhorn(alpha, beta, kernel, opt);
  // eps H(gamma|K) = <u, gamma 1> + <v, gamma^T 1> since log(gamma/K) = (u+v)/eps
  const VectorXd rm = r.coupling.first_marginal();
  const VectorXd cm = r.coupling.second_marginal();
  const double mass = rm.sum();
  return r.potentials.u.dot(rm) + r.potentials.v.dot(cm) - kernel.epsilon * mass;
}

double kl_generalized(const Measure& alpha, const Measure& beta) {
  const int n = static_cast<int>(alpha.weights.size());
  if (beta.weights.size() != n) throw InvalidInput("kl_generalized: size mismatch");
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    const double a = alpha.weights[i], b = beta.weights[i];
    if (a > 0.0) {
      if (b <= 0.0) return kInf;
      s += a * std::log(a / b) - a + b;
    } else {
      s += b;
    }
  }
  return s;
}

double relative_entropy(const Measure& alpha, const Measure& beta) {
  double s = 0.0;
  for (int i = 0; i < alpha.weights.size(); ++i) {
    const double a = alpha.weights[i], b = beta.weights[i];
    if (a > 0.0) {
      if (b <= 0.0) return kInf;
      s += a * std::log(a / b);
    }
  }
  return s;
}

VectorXd otc_equality_map(const GibbsKernel& kernel, const VectorXd& v) {
  if (!kernel.row_normalized) throw InvalidInput("otc_equality_map: kernel must be row-normalized");
  const double eps = kernel.epsilon;
  const int n = static_cast<int>(kernel.entries.rows());
  MatrixXd logK = kernel.log_entries.size() == kernel.entries.size()
                      ? kernel.log_entries
                      : MatrixXd(kernel.entries.array().log());
  VectorXd z = v / eps;
  VectorXd out(n);
  for (int i = 0; i < n; ++i) out[i] = -eps * lse_row(logK.row(i), z);
  return out;
}

VectorXd branching_phi(const VectorXd& psi, const VectorXd& g, double kappa) {
  if (std::isinf(kappa)) return -g.array() * psi.array();
  // equality boundary of the soft-constraint conjugate: phi = kappa g (1 - e^{psi/kappa})
  VectorXd phi(psi.size());
  for (int i = 0; i < psi.size(); ++i) {
    const double z = psi[i] / kappa;
    phi[i] = z > 500.0 ? -kInf : -kappa * g[i] * std::expm1(z);
  }
  return phi;
}

LegendreReport legendre_value(LegendreKind kind, const VectorXd& u, const VectorXd& v,
                              const LegendreContext& ctx) {
  LegendreReport rep;
  switch (kind) {
    case LegendreKind::OT: {
      const GibbsKernel& K = *ctx.kernel;
      const double eps = K.epsilon;
      rep.value = eps * ((u / eps).array().exp().matrix())
                            .dot(K.entries * (v / eps).array().exp().matrix());
      break;
    }
    case LegendreKind::OTU:
    case LegendreKind::OTN: {
      const GibbsKernel& K = *ctx.kernel;
      if (!K.row_normalized) throw InvalidInput("legendre_value: OTU/OTN need Kbar");
      const double eps = K.epsilon;
      // OTU keeps the e^{v/eps - 1} offset; for the probability-restricted
      // transform the offset cancels against the simplex multiplier, leaving
      // eps * log <e^{u/eps}, diag(pi0) Kbar e^{v/eps}>.
      if (kind == LegendreKind::OTU) {
        const VectorXd inner = K.entries * ((v / eps).array() - 1.0).exp().matrix();
        rep.value = eps * ((u / eps).array().exp() * ctx.pi0.array() * inner.array()).sum();
      } else {
        const VectorXd inner = K.entries * (v / eps).array().exp().matrix();
        rep.value = eps * std::log(
            ((u / eps).array().exp() * ctx.pi0.array() * inner.array()).sum());
      }
      break;
    }
    case LegendreKind::OTC: {
      const GibbsKernel& K = *ctx.kernel;
      rep.induced = otc_equality_map(K, v);
      rep.feasible = ((u - rep.induced).array() <= 1e-12).all();
      rep.value = rep.feasible ? 0.0 : kInf;
      break;
    }
    case LegendreKind::KL2: {
      double s = 0.0;
      for (int i = 0; i < v.size(); ++i) {
        if (ctx.rho_hat[i] > 0.0) {
          if (v[i] >= 1.0) {
            rep.value = kInf;
            rep.feasible = false;
            return rep;
          }
          s += ctx.rho_hat[i] * (-std::log1p(-v[i]));
        }
      }
      rep.value = s;
      break;
    }
    case LegendreKind::SB: {
      // psi plays the role of v, phi the role of u
      rep.induced = branching_phi(v, ctx.growth, ctx.kappa);
      if (!rep.induced.allFinite()) {
        rep.value = kInf;
        rep.feasible = false;
        return rep;
      }
      rep.feasible = ((u - rep.induced).array() <= 1e-12).all();
      rep.value = rep.feasible ? 0.0 : kInf;
      break;
    }
    case LegendreKind::HB: {
      rep.induced = branching_phi(v, ctx.growth, kInf);
      rep.feasible = ((u - rep.induced).array().abs() <= 1e-12).all();
      rep.value = rep.feasible ? 0.0 : kInf;
      break;
    }
  }
  return rep;
}

}  // namespace pathlaw
