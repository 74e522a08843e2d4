#include "pathlaw/solver.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <map>

namespace pathlaw {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double lse_vec(const VectorXd& x) {
  const double m = x.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((x.array() - m).exp().sum());
}

// exp(scale_log) * y, elementwise, routed through logs when the scale alone
// would overflow.
VectorXd scaled_exp_product(const VectorXd& y, double scale_log) {
  if (scale_log < 690.0 && scale_log > -690.0) return std::exp(scale_log) * y;
  VectorXd out(y.size());
  for (int i = 0; i < y.size(); ++i)
    out[i] = y[i] > 0.0 ? std::exp(scale_log + std::log(y[i])) : 0.0;
  return out;
}

struct Workspace {
  const ProblemSpec& spec;
  PairwiseOps ops;
  int T, n;
  VectorXd dts;
  std::vector<double> eps_w, inv_eps_w;    // per gap
  std::vector<double> eps_df, inv_eps_df;  // per time
  std::map<double, std::vector<int>> df_groups;
  std::map<double, VectorXd> logsum_cache;
  VectorXd log_pi0;

  Workspace(const ProblemSpec& s, int threads)
      : spec(s), ops(s.support.points, threads), T(s.num_times()), n(s.support_size()) {
    dts.resize(T - 1);
    eps_w.resize(T - 1);
    inv_eps_w.resize(T - 1);
    for (int g = 0; g < T - 1; ++g) {
      dts[g] = s.dt(g);
      eps_w[g] = s.sigma2 * dts[g];
      inv_eps_w[g] = s.reg_cost_scale[g] / eps_w[g];
    }
    eps_df.resize(T);
    inv_eps_df.resize(T);
    for (int i = 0; i < T; ++i) {
      eps_df[i] = s.eps_df[i];
      inv_eps_df[i] = s.df_cost_scale[i] / s.eps_df[i];
      df_groups[inv_eps_df[i]].push_back(i);
    }
    log_pi0 = s.pi0.array().log();
  }

  const VectorXd& row_logsums(double inv_eps) {
    auto it = logsum_cache.find(inv_eps);
    if (it != logsum_cache.end()) return it->second;
    VectorXd L;
    ops.row_logsums(inv_eps, L);
    return logsum_cache.emplace(inv_eps, std::move(L)).first->second;
  }
};

// Everything computed during one pass over the dual objective; reused by the
// gradient, the duality-gap certificate and primal recovery.
struct Eval {
  bool feasible = true;
  double J = -kInf;

  MatrixXd psi, phi, v, u;   // chain (rows: gap index, see AuxiliaryChain)
  std::vector<VectorXd> S;   // per gap g>=1: S_j = lse_k(v_k/eps - C*invEps)
  VectorXd S0;               // gap 0, with the OTN -1 offset folded out
  VectorXd otn_x, otn_p;     // OTN softmax input and weights
  double otn_value = 0.0;

  // data-term products, per time
  std::vector<VectorXd> Keb, Kea;     // K exp(b - Mb), K exp(a - Ma)
  std::vector<double> Ma, Mb;
  std::vector<double> df_value;       // OT* value per time
  double kl_total = 0.0;
};

void chain_forward(Workspace& ws, const DualState& st, Eval& ev) {
  const ProblemSpec& s = ws.spec;
  const int T = ws.T, n = ws.n;
  ev.psi.resize(T - 1, n);
  ev.phi.resize(T - 1, n);
  ev.v.resize(T - 1, n);
  ev.u.resize(T - 1, n);
  ev.S.assign(T - 1, VectorXd());

  ev.psi.row(T - 2) = -(ws.dts[T - 2] * s.weights[T - 1] / s.lambda) * st.u_hat.row(T - 1);
  for (int r = T - 2; r >= 0; --r) {
    // phi_{r+1} from psi_{r+2}
    const double kap = s.kappa[r];
    if (std::isinf(kap)) {
      ev.phi.row(r) = -s.growth.row(r).array() * ev.psi.row(r).array();
    } else {
      if ((ev.psi.row(r).array() > 500.0 * kap).any()) {
        ev.feasible = false;  // exp overflow guard, signalled as -inf upstream
        return;
      }
      ev.phi.row(r) = -kap * s.growth.row(r).array() *
                      (ev.psi.row(r).array() / kap).exp().unaryExpr(
                          [](double e) { return e - 1.0; });
    }
    ev.v.row(r) = -(s.masses[r] / s.masses[r + 1]) * ev.phi.row(r);
    if (r >= 1) {
      VectorXd y = ev.v.row(r).transpose() / ws.eps_w[r];
      VectorXd S;
      ws.ops.logsumexp_rows(y, ws.inv_eps_w[r], S);
      ev.S[r] = std::move(S);
      const VectorXd& L = ws.row_logsums(ws.inv_eps_w[r]);
      ev.u.row(r) = -ws.eps_w[r] * (ev.S[r] - L).transpose();
      ev.psi.row(r - 1) = -(ws.dts[r - 1] / ws.dts[r]) * ev.u.row(r) -
                          (ws.dts[r - 1] * s.weights[r] / s.lambda) * st.u_hat.row(r);
    }
  }
  ev.u.row(0) = -(ws.dts[0] * s.weights[0] / s.lambda) * st.u_hat.row(0);
}

// Dual objective with all per-term products cached in ev.
void evaluate_dual(Workspace& ws, const DualState& st, Eval& ev) {
  const ProblemSpec& s = ws.spec;
  const int T = ws.T, n = ws.n;

  chain_forward(ws, st, ev);
  if (!ev.feasible) {
    ev.J = -kInf;
    return;
  }

  // KL2 domain: v_hat_i > -lambda_i wherever the data charges mass
  ev.kl_total = 0.0;
  for (int i = 0; i < T; ++i) {
    const double li = s.lambda_df[i];
    double term = 0.0;
    for (int j = 0; j < n; ++j) {
      const double rho = s.data(i, j);
      if (rho <= 0.0) continue;
      const double z = st.v_hat(i, j) / li;
      if (z <= -1.0) {
        ev.feasible = false;
        ev.J = -kInf;
        return;
      }
      term += rho * (-std::log1p(z));
    }
    ev.kl_total += li * s.weights[i] * term;
  }

  // first-gap term: conjugate of the probability-restricted transport cost,
  // eps * log <e^{u/eps}, diag(pi0) Kbar e^{v/eps}>
  {
    const double eps = ws.eps_w[0];
    VectorXd y = ev.v.row(0).transpose() / eps;
    ws.ops.logsumexp_rows(y, ws.inv_eps_w[0], ev.S0);
    const VectorXd& L = ws.row_logsums(ws.inv_eps_w[0]);
    ev.otn_x = ev.u.row(0).transpose() / eps + ws.log_pi0 + ev.S0 - L;
    const double lseA = lse_vec(ev.otn_x);
    ev.otn_value = eps * lseA;
    ev.otn_p = (ev.otn_x.array() - lseA).exp();
  }

  // data-fitting OT* terms, batched per kernel scale
  ev.Keb.assign(T, VectorXd());
  ev.Kea.assign(T, VectorXd());
  ev.Ma.assign(T, 0.0);
  ev.Mb.assign(T, 0.0);
  ev.df_value.assign(T, 0.0);
  for (const auto& [inv_eps, members] : ws.df_groups) {
    MatrixXd B(n, 2 * static_cast<int>(members.size()));
    for (std::size_t k = 0; k < members.size(); ++k) {
      const int i = members[k];
      const double eps = ws.eps_df[i];
      VectorXd a = st.u_hat.row(i).transpose() / eps;
      VectorXd b = st.v_hat.row(i).transpose() / eps;
      ev.Ma[i] = a.maxCoeff();
      ev.Mb[i] = b.maxCoeff();
      B.col(2 * k) = (b.array() - ev.Mb[i]).exp();
      B.col(2 * k + 1) = (a.array() - ev.Ma[i]).exp();
    }
    MatrixXd KB;
    ws.ops.kernel_matmul(inv_eps, B, KB);
    for (std::size_t k = 0; k < members.size(); ++k) {
      const int i = members[k];
      ev.Keb[i] = KB.col(2 * k);
      ev.Kea[i] = KB.col(2 * k + 1);
      const double eps = ws.eps_df[i];
      const double inner = B.col(2 * k + 1).dot(ev.Keb[i]);
      const double scale_log = ev.Ma[i] + ev.Mb[i];
      ev.df_value[i] =
          inner > 0.0 ? eps * std::exp(scale_log + std::log(inner)) : 0.0;
    }
  }

  double J = -(s.lambda / (s.masses[0] * ws.dts[0])) * ev.otn_value;
  for (int i = 0; i < T; ++i) J -= (s.weights[i] / s.masses[i]) * ev.df_value[i];
  J -= ev.kl_total;
  ev.J = std::isfinite(J) ? J : -kInf;
}

// Reverse accumulation through the chain; requires a feasible Eval.
void evaluate_gradient(Workspace& ws, const DualState& st, const Eval& ev, DualState& grad) {
  const ProblemSpec& s = ws.spec;
  const int T = ws.T, n = ws.n;
  grad.u_hat.setZero(T, n);
  grad.v_hat.setZero(T, n);

  // data terms
  for (int i = 0; i < T; ++i) {
    const double eps = ws.eps_df[i];
    const double c = -s.weights[i] / s.masses[i];
    const double scale_log = ev.Ma[i] + ev.Mb[i];
    VectorXd ea = (st.u_hat.row(i).transpose().array() / eps - ev.Ma[i]).exp();
    VectorXd eb = (st.v_hat.row(i).transpose().array() / eps - ev.Mb[i]).exp();
    grad.u_hat.row(i) +=
        c * scaled_exp_product(ea.cwiseProduct(ev.Keb[i]), scale_log).transpose();
    grad.v_hat.row(i) +=
        c * scaled_exp_product(eb.cwiseProduct(ev.Kea[i]), scale_log).transpose();
    // KL2 term
    for (int j = 0; j < n; ++j) {
      const double rho = s.data(i, j);
      if (rho > 0.0)
        grad.v_hat(i, j) += s.weights[i] * rho / (1.0 + st.v_hat(i, j) / s.lambda_df[i]);
    }
  }

  // OTN seeds
  const double otn_c = -s.lambda / (s.masses[0] * ws.dts[0]);
  VectorXd gu = otn_c * ev.otn_p;
  VectorXd gv(n);
  {
    VectorXd y = ev.v.row(0).transpose() / ws.eps_w[0];
    VectorXd wtp;
    ws.ops.weighted_expsum(ev.otn_p, -ev.S0, y, ws.inv_eps_w[0], wtp);
    gv = otn_c * wtp;
  }
  grad.u_hat.row(0) += -(ws.dts[0] * s.weights[0] / s.lambda) * gu.transpose();

  // ascend the chain
  for (int r = 0; r <= T - 2; ++r) {
    VectorXd gphi = -(s.masses[r] / s.masses[r + 1]) * gv;
    VectorXd gpsi(n);
    const double kap = s.kappa[r];
    if (std::isinf(kap)) {
      gpsi = -s.growth.row(r).transpose().array() * gphi.array();
    } else {
      // d phi / d psi = -g e^{psi/kappa}
      gpsi = (-s.growth.row(r).transpose().array() *
              (ev.psi.row(r).transpose().array() / kap).exp()) *
             gphi.array();
    }
    if (r + 1 <= T - 2) {
      gu = -(ws.dts[r] / ws.dts[r + 1]) * gpsi;
      grad.u_hat.row(r + 1) += -(ws.dts[r] * s.weights[r + 1] / s.lambda) * gpsi.transpose();
      VectorXd y = ev.v.row(r + 1).transpose() / ws.eps_w[r + 1];
      VectorXd wt;
      ws.ops.weighted_expsum(gu, -ev.S[r + 1], y, ws.inv_eps_w[r + 1], wt);
      gv = -wt;
    } else {
      grad.u_hat.row(T - 1) += -(ws.dts[T - 2] * s.weights[T - 1] / s.lambda) * gpsi.transpose();
    }
  }
}

// Feasible primal candidate and its objective value (the gap certificate).
// Returns +inf if the candidate cannot be formed numerically.
double certificate_primal(Workspace& ws, const DualState& st, const Eval& ev,
                          Reconstruction* rec) {
  const ProblemSpec& s = ws.spec;
  const int T = ws.T, n = ws.n;

  // raw data-coupling first marginals, in log domain so boundary states
  // (v_hat -> -inf off the data support) stay representable
  std::vector<VectorXd> log_Rdata(T);
  for (int i = 0; i < T; ++i) {
    const double eps = ws.eps_df[i];
    VectorXd b = st.v_hat.row(i).transpose() / eps;
    VectorXd S;
    ws.ops.logsumexp_rows(b, ws.inv_eps_df[i], S);
    log_Rdata[i] = st.u_hat.row(i).transpose() / eps + S;
  }
  const double log_mass1 = lse_vec(log_Rdata[0]);
  if (!std::isfinite(log_mass1)) return kInf;

  std::vector<VectorXd> marg(T), inter(T - 1), rhat(T);
  marg[0] = (log_Rdata[0].array() - log_mass1).exp();

  double reg = 0.0;   // sum of OT-type terms with their 1/(m dt) factors
  double gterm = 0.0; // branching penalties with their factors

  for (int g = 0; g < T - 1; ++g) {
    const double eps = ws.eps_w[g];
    VectorXd y = ev.v.row(g).transpose() / eps;
    double value;
    if (g == 0) {
      const VectorXd& L = ws.row_logsums(ws.inv_eps_w[0]);
      VectorXd t = ev.S0 - L;  // log [Kbar e^{v/eps}]
      VectorXd log_r1 = marg[0].array().log();
      ws.ops.weighted_expsum(marg[0], -ev.S0, y, ws.inv_eps_w[0], inter[0]);
      double h = 0.0;
      for (int j = 0; j < n; ++j)
        if (marg[0][j] > 0.0) h += marg[0][j] * (log_r1[j] - ws.log_pi0[j] - t[j]);
      value = eps * h + ev.v.row(0).dot(inter[0]);
    } else {
      ws.ops.weighted_expsum(marg[g], -ev.S[g], y, ws.inv_eps_w[g], inter[g]);
      value = ev.u.row(g).dot(marg[g]) + ev.v.row(g).dot(inter[g]);
    }
    reg += value / (s.masses[g] * ws.dts[g]);

    // branching step
    const double kap = s.kappa[g];
    if (std::isinf(kap)) {
      marg[g + 1] = s.growth.row(g).transpose().array() * inter[g].array();
    } else {
      marg[g + 1] = s.growth.row(g).transpose().array() *
                    (ev.psi.row(g).transpose().array() / kap).exp() * inter[g].array();
      const double G = marg[g + 1].dot(ev.psi.row(g).transpose()) -
                       kap * (marg[g + 1].sum() -
                              (s.growth.row(g).transpose().array() * inter[g].array()).sum());
      gterm += G / (s.masses[g + 1] * ws.dts[g]);
    }
  }

  // data terms at the propagated marginals; the rescaled coupling's second
  // marginal log Rhat'_k = b_k + lse_j(log c_j + a_j - C_jk invEps) comes
  // from one symmetric log-domain pass per time
  double fit = 0.0;
  for (int i = 0; i < T; ++i) {
    const double eps = ws.eps_df[i];
    VectorXd log_c = marg[i].array().log() - log_Rdata[i].array();
    VectorXd a = st.u_hat.row(i).transpose() / eps;
    VectorXd b = st.v_hat.row(i).transpose() / eps;
    VectorXd S2;
    ws.ops.logsumexp_rows(log_c + a, ws.inv_eps_df[i], S2);
    rhat[i] = (b + S2).array().exp();
    double ot = 0.0;
    for (int j = 0; j < n; ++j)
      if (marg[i][j] > 0.0) ot += marg[i][j] * (eps * log_c[j] + st.u_hat(i, j));
    ot += st.v_hat.row(i).dot(rhat[i]) - eps * marg[i].sum();
    const double kl = kl_generalized(Measure::positive(s.data.row(i).transpose()),
                                     Measure::positive(rhat[i] / s.masses[i]));
    if (!std::isfinite(kl)) return kInf;
    fit += s.weights[i] * (ot / s.masses[i] + s.lambda_df[i] * kl);
  }

  const double primal = s.lambda * (reg + gterm) + fit;

  if (rec) {
    rec->times = s.times;
    // realized factors: g e^{psi/kappa} under the soft constraint
    rec->growth = s.growth;
    for (int g = 0; g < T - 1; ++g)
      if (!std::isinf(s.kappa[g]))
        rec->growth.row(g).array() *= (ev.psi.row(g).array() / s.kappa[g]).exp();
    rec->marginals = marg;
    rec->intermediates = inter;
    rec->data_fit_marginals = rhat;
    const double c1 = std::exp(-log_mass1);
    rec->data_marginals.resize(T);
    for (int i = 0; i < T; ++i)
      rec->data_marginals[i] = c1 * log_Rdata[i].array().exp().matrix();
    rec->transport.resize(T - 1);
    for (int g = 0; g < T - 1; ++g) {
      const double eps = ws.eps_w[g];
      LogCoupling& lc = rec->transport[g];
      lc.inv_eps = ws.inv_eps_w[g];
      const VectorXd& S = g == 0 ? ev.S0 : ev.S[g];
      lc.lrow = marg[g].array().log().matrix() - S;
      lc.lcol = ev.v.row(g).transpose() / eps;
    }
    rec->data_couplings.resize(T);
    for (int i = 0; i < T; ++i) {
      const double eps = ws.eps_df[i];
      LogCoupling& lc = rec->data_couplings[i];
      lc.inv_eps = ws.inv_eps_df[i];
      lc.lrow = marg[i].array().log().matrix() - log_Rdata[i] +
                st.u_hat.row(i).transpose() / eps;
      lc.lcol = st.v_hat.row(i).transpose() / eps;
    }
  }
  return primal;
}

// ---------------- L-BFGS with strong Wolfe line search ----------------

class Lbfgs {
 public:
  explicit Lbfgs(int history) : m_(history) {}

  void push(const VectorXd& s, const VectorXd& y) {
    const double sy = s.dot(y);
    if (sy <= 1e-16 * s.norm() * y.norm()) return;  // skip non-curvature pairs
    if (static_cast<int>(s_.size()) == m_) {
      s_.erase(s_.begin());
      y_.erase(y_.begin());
      rho_.erase(rho_.begin());
    }
    s_.push_back(s);
    y_.push_back(y);
    rho_.push_back(1.0 / sy);
  }

  // two-loop recursion: d = -H g
  VectorXd direction(const VectorXd& g) const {
    VectorXd q = g;
    const int k = static_cast<int>(s_.size());
    std::vector<double> alpha(k);
    for (int i = k - 1; i >= 0; --i) {
      alpha[i] = rho_[i] * s_[i].dot(q);
      q -= alpha[i] * y_[i];
    }
    if (k > 0) q *= s_.back().dot(y_.back()) / y_.back().squaredNorm();
    for (int i = 0; i < k; ++i) {
      const double beta = rho_[i] * y_[i].dot(q);
      q += (alpha[i] - beta) * s_[i];
    }
    return -q;
  }

 private:
  int m_;
  std::vector<VectorXd> s_, y_;
  std::vector<double> rho_;
};

// One evaluated point on the search ray.
struct Probe {
  double alpha = 0.0;
  double f = kInf;
  double dphi = kInf;
  VectorXd x, g;
};

// Strong Wolfe line search (bracket + bisection zoom). On success `out`
// holds the accepted point with its value and gradient; falls back to any
// sufficient-decrease point if the curvature condition is numerically out
// of reach. Returns false if no decrease was found.
bool strong_wolfe(const std::function<double(const VectorXd&, VectorXd&)>& fg,
                  const VectorXd& x0, double f0, const VectorXd& d, double dphi0,
                  double alpha_init, Probe& out) {
  constexpr double c1 = 1e-4, c2 = 0.9;
  const int max_evals = 60;
  int evals = 0;

  auto eval = [&](double a, Probe& p) {
    p.alpha = a;
    p.x = x0 + a * d;
    p.f = fg(p.x, p.g);
    p.dphi = std::isfinite(p.f) ? p.g.dot(d) : kInf;
    ++evals;
  };

  Probe lo;  // best sufficient-decrease point seen
  lo.alpha = 0.0;
  lo.f = f0;
  lo.dphi = dphi0;
  bool have_lo = false;

  Probe cur;
  double hi_alpha = 0.0;
  bool bracketed = false;
  double a = alpha_init;
  double a_prev = 0.0, f_prev = f0;

  while (evals < max_evals) {
    eval(a, cur);
    if (!std::isfinite(cur.f) || cur.f > f0 + c1 * a * dphi0 ||
        (have_lo && cur.f >= f_prev)) {
      hi_alpha = a;
      bracketed = true;
      break;
    }
    // sufficient decrease holds at cur
    if (std::abs(cur.dphi) <= -c2 * dphi0) {
      out = std::move(cur);
      return true;
    }
    lo = cur;
    have_lo = true;
    if (cur.dphi >= 0.0) {
      hi_alpha = a_prev;
      bracketed = true;
      break;
    }
    a_prev = a;
    f_prev = cur.f;
    a = std::min(a * 2.0, 1e10);
  }
  if (!bracketed) {
    if (have_lo) { out = std::move(lo); return true; }
    return false;
  }

  // zoom between lo.alpha and hi_alpha
  while (evals < max_evals) {
    const double amid = 0.5 * (lo.alpha + hi_alpha);
    if (!(amid > 0.0) || std::abs(hi_alpha - lo.alpha) <= 1e-14 * std::max(1.0, lo.alpha))
      break;
    eval(amid, cur);
    if (!std::isfinite(cur.f) || cur.f > f0 + c1 * amid * dphi0 || cur.f >= lo.f) {
      hi_alpha = amid;
    } else {
      if (std::abs(cur.dphi) <= -c2 * dphi0) {
        out = std::move(cur);
        return true;
      }
      if (cur.dphi * (hi_alpha - lo.alpha) >= 0.0) hi_alpha = lo.alpha;
      lo = std::move(cur);
      have_lo = true;
    }
  }
  if (have_lo && lo.alpha > 0.0) {
    out = std::move(lo);
    return true;
  }
  return false;
}

}  // namespace

// ---------------- spec plumbing ----------------

void ProblemSpec::validate() const {
  const int T = num_times();
  const int n = support_size();
  if (T < 2) throw InvalidInput("ProblemSpec: need at least two time-points");
  for (int i = 0; i + 1 < T; ++i)
    if (!(times[i + 1] > times[i]))
      throw InvalidInput("ProblemSpec: times must be strictly increasing (duplicate times rejected)");
  if (data.rows() != T || data.cols() != n) throw InvalidInput("ProblemSpec: data shape");
  for (int i = 0; i < T; ++i) {
    if ((data.row(i).array() < 0).any() || std::abs(data.row(i).sum() - 1.0) > 1e-9)
      throw InvalidInput("ProblemSpec: each data row must be a probability vector");
  }
  if (!(sigma2 > 0) || !(lambda > 0)) throw InvalidInput("ProblemSpec: sigma2, lambda must be positive");
  auto positive = [](const VectorXd& v) { return (v.array() > 0).all(); };
  if (eps_df.size() != T || !positive(eps_df)) throw InvalidInput("ProblemSpec: eps_df");
  if (weights.size() != T || !positive(weights) || std::abs(weights.sum() - 1.0) > 1e-9)
    throw InvalidInput("ProblemSpec: weights must be positive and sum to 1");
  if (lambda_df.size() != T || !positive(lambda_df)) throw InvalidInput("ProblemSpec: lambda_df");
  if (masses.size() != T || !positive(masses)) throw InvalidInput("ProblemSpec: masses");
  if (growth.rows() != T - 1 || growth.cols() != n || (growth.array() <= 0).any())
    throw InvalidInput("ProblemSpec: growth factors must be positive, one row per gap");
  if (kappa.size() != T - 1) throw InvalidInput("ProblemSpec: kappa size");
  for (int g = 0; g < T - 1; ++g)
    if (!(kappa[g] > 0)) throw InvalidInput("ProblemSpec: kappa must be positive (or +inf)");
  if (pi0.size() != n || !positive(pi0) || std::abs(pi0.sum() - 1.0) > 1e-9)
    throw InvalidInput("ProblemSpec: pi0 must be a positive probability vector");
  if (reg_cost_scale.size() != T - 1 || !positive(reg_cost_scale))
    throw InvalidInput("ProblemSpec: reg_cost_scale");
  if (df_cost_scale.size() != T || !positive(df_cost_scale))
    throw InvalidInput("ProblemSpec: df_cost_scale");
}

ProblemSpec ProblemSpec::build(Support support, VectorXd times, MatrixXd data,
                               double sigma2, double lambda, double eps_df_value,
                               double lambda_df_value) {
  ProblemSpec s;
  const int T = static_cast<int>(times.size());
  const int n = support.size();
  s.support = std::move(support);
  s.times = std::move(times);
  s.data = std::move(data);
  s.sigma2 = sigma2;
  s.lambda = lambda;
  s.eps_df = VectorXd::Constant(T, eps_df_value);
  s.weights = VectorXd::Constant(T, 1.0 / T);
  s.lambda_df = VectorXd::Constant(T, lambda_df_value);
  s.masses = VectorXd::Ones(T);
  s.growth = MatrixXd::Ones(T - 1, n);
  s.kappa = VectorXd::Constant(T - 1, kInf);
  s.pi0 = VectorXd::Constant(n, 1.0 / n);
  s.reg_cost_scale = VectorXd::Ones(T - 1);
  s.df_cost_scale = VectorXd::Ones(T);
  s.validate();
  return s;
}

AuxiliaryChain auxiliary_chain(const DualState& state, const ProblemSpec& spec) {
  spec.validate();
  Workspace ws(spec, 1);
  Eval ev;
  chain_forward(ws, state, ev);
  AuxiliaryChain chain;
  chain.feasible = ev.feasible;
  if (ev.feasible) {
    chain.u = ev.u;
    chain.v = ev.v;
    chain.phi = ev.phi;
    chain.psi = ev.psi;
  }
  return chain;
}

double dual_objective(const DualState& state, const ProblemSpec& spec) {
  spec.validate();
  Workspace ws(spec, 1);
  Eval ev;
  evaluate_dual(ws, state, ev);
  return ev.J;
}

DualState dual_gradient(const DualState& state, const ProblemSpec& spec) {
  spec.validate();
  Workspace ws(spec, 1);
  Eval ev;
  evaluate_dual(ws, state, ev);
  if (!ev.feasible || !std::isfinite(ev.J))
    throw InvalidInput("dual_gradient: state outside the dual domain");
  DualState g;
  evaluate_gradient(ws, state, ev, g);
  return g;
}

Reconstruction recover_primal(const DualState& state, const ProblemSpec& spec, int threads) {
  spec.validate();
  Workspace ws(spec, threads);
  Eval ev;
  evaluate_dual(ws, state, ev);
  if (!ev.feasible || !std::isfinite(ev.J))
    throw InvalidInput("recover_primal: state outside the dual domain");
  Reconstruction rec;
  rec.ops = std::make_shared<PairwiseOps>(spec.support.points, threads);
  const double primal = certificate_primal(ws, state, ev, &rec);
  if (!std::isfinite(primal))
    throw InvalidInput("recover_primal: overflow in exponentials; rescale costs");
  rec.primal_value = primal;
  rec.dual_value = ev.J;
  rec.gap = primal - ev.J;
  return rec;
}

SolveResult solve(const ProblemSpec& spec, const SolverOptions& opt) {
  spec.validate();
  Workspace ws(spec, opt.threads);
  const int T = ws.T, n = ws.n;
  const int dim = 2 * T * n;

  auto unpack = [&](const VectorXd& x, DualState& st) {
    st.u_hat = Eigen::Map<const MatrixXd>(x.data(), T, n);
    st.v_hat = Eigen::Map<const MatrixXd>(x.data() + T * n, T, n);
  };
  auto pack = [&](const DualState& st) {
    VectorXd x(dim);
    Eigen::Map<MatrixXd>(x.data(), T, n) = st.u_hat;
    Eigen::Map<MatrixXd>(x.data() + T * n, T, n) = st.v_hat;
    return x;
  };

  DualState cur = opt.init ? *opt.init : DualState::zeros(T, n);
  VectorXd x = pack(cur);

  DualState grad_state;
  Eval ev;
  auto fg = [&](const VectorXd& xv, VectorXd& gv) -> double {
    DualState st;
    unpack(xv, st);
    evaluate_dual(ws, st, ev);
    if (!std::isfinite(ev.J)) {
      gv.setZero(dim);
      return kInf;
    }
    evaluate_gradient(ws, st, ev, grad_state);
    gv.resize(dim);
    Eigen::Map<MatrixXd>(gv.data(), T, n) = -grad_state.u_hat;
    Eigen::Map<MatrixXd>(gv.data() + T * n, T, n) = -grad_state.v_hat;
    return -ev.J;
  };

  VectorXd g(dim);
  double f = fg(x, g);
  if (!std::isfinite(f)) throw InvalidInput("solve: infeasible initial state");

  Lbfgs lbfgs(opt.history);
  SolveResult res;
  res.converged = false;
  int iter = 0;
  for (; iter < opt.max_iter; ++iter) {
    const double gnorm = g.lpNorm<Eigen::Infinity>();
    res.grad_norm = gnorm;
    if (gnorm <= opt.grad_tol) {
      res.converged = true;
      break;
    }
    if ((iter % opt.gap_check_every) == 0) {
      DualState st;
      unpack(x, st);
      evaluate_dual(ws, st, ev);  // refresh caches at x
      const double primal = certificate_primal(ws, st, ev, nullptr);
      const double gap = primal - ev.J;
      if (opt.verbose)
        std::fprintf(stderr, "iter %d dual %.10g gap %.3e grad %.3e\n", iter, ev.J, gap, gnorm);
      if (gap <= opt.gap_tol) {
        res.converged = true;
        break;
      }
    }

    VectorXd d = lbfgs.direction(g);
    double dphi0 = g.dot(d);
    if (!(dphi0 < 0.0)) {  // safeguard: reset to steepest descent
      d = -g;
      dphi0 = g.dot(d);
    }
    const double alpha0 = iter == 0 ? std::min(1.0, 1.0 / std::max(1e-12, g.norm())) : 1.0;

    Probe accepted;
    if (!strong_wolfe(fg, x, f, d, dphi0, alpha0, accepted))
      break;  // no decrease possible; report best so far

    lbfgs.push(accepted.x - x, accepted.g - g);
    x.swap(accepted.x);
    f = accepted.f;
    g.swap(accepted.g);
    if (opt.on_iterate) opt.on_iterate(iter + 1, -f);
  }

  DualState final_state;
  unpack(x, final_state);
  res.state = final_state;
  res.iterations = iter;
  res.reconstruction = recover_primal(final_state, spec, opt.threads);
  res.reconstruction.converged = res.converged;
  res.reconstruction.iterations = iter;
  res.dual_value = res.reconstruction.dual_value;
  res.primal_value = res.reconstruction.primal_value;
  res.gap = res.reconstruction.gap;
  if (res.gap <= opt.gap_tol) res.converged = true;
  res.reconstruction.converged = res.converged;
  return res;
}

// ---------------- dense helpers and the independent primal ----------------

MatrixXd dense_from_log(const PairwiseOps& ops, const LogCoupling& lc) {
  const int n = ops.size();
  MatrixXd out(n, n);
  const MatrixXd& P = ops.points();
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k) {
      const double c0 = 0.5 * (P.row(j) - P.row(k)).squaredNorm();
      const double t = lc.lrow[j] + lc.lcol[k] - c0 * lc.inv_eps;
      out(j, k) = t > -745.0 ? std::exp(t) : 0.0;
    }
  return out;
}

MatrixXd Reconstruction::dense_transport(int gap) const {
  return dense_from_log(*ops, transport.at(gap));
}

MatrixXd Reconstruction::dense_data_coupling(int i) const {
  return dense_from_log(*ops, data_couplings.at(i));
}

double primal_objective(const Reconstruction& rec, const ProblemSpec& spec) {
  spec.validate();
  const int T = spec.num_times();
  const int n = spec.support_size();
  if (static_cast<int>(rec.marginals.size()) != T)
    throw InvalidInput("primal_objective: reconstruction/spec mismatch");
  if (std::abs(rec.marginals[0].sum() - 1.0) > 1e-6)
    throw InvalidInput("primal_objective: R_{t_1} must have unit mass");

  SinkhornOptions sopt;
  sopt.tol = 1e-10;
  sopt.max_iter = 200000;
  sopt.eps_annealing = true;

  double reg = 0.0, gterm = 0.0, fit = 0.0;
  for (int g = 0; g < T - 1; ++g) {
    const double eps = spec.sigma2 * spec.dt(g);
    GibbsKernel K = gibbs_kernel(spec.support, eps / spec.reg_cost_scale[g], std::nullopt, true);
    K.epsilon = eps;  // row-normalized kernel at the scaled cost, bookkept at eps
    // reference: diag(pi0) Kbar for the first gap, diag(R_i) Kbar inside
    const VectorXd& first = g == 0 ? spec.pi0 : rec.marginals[g];
    GibbsKernel ref = K;
    ref.entries.array().colwise() *= first.array();
    ref.log_entries.array().colwise() += first.array().log();
    const Measure alpha = Measure::positive(rec.marginals[g]);
    const Measure beta = Measure::positive(rec.intermediates[g]);
    SinkhornResult sr = sinkhorn(alpha, beta, ref, sopt);
    const double value = sr.potentials.u.dot(sr.coupling.first_marginal()) +
                         sr.potentials.v.dot(sr.coupling.second_marginal());
    reg += value / (spec.masses[g] * spec.dt(g));

    const VectorXd grown = spec.growth.row(g).transpose().array() * rec.intermediates[g].array();
    if (spec.hard_branching(g)) {
      const double dev = (rec.marginals[g + 1] - grown).lpNorm<Eigen::Infinity>();
      if (dev > 1e-6 * std::max(1.0, grown.lpNorm<Eigen::Infinity>()))
        return std::numeric_limits<double>::infinity();
    } else {
      gterm += spec.kappa[g] *
               kl_generalized(Measure::positive(rec.marginals[g + 1]), Measure::positive(grown)) /
               (spec.masses[g + 1] * spec.dt(g));
    }
  }
  for (int i = 0; i < T; ++i) {
    GibbsKernel K = gibbs_kernel(spec.support, spec.eps_df[i] / spec.df_cost_scale[i]);
    K.epsilon = spec.eps_df[i];
    const Measure alpha = Measure::positive(rec.marginals[i]);
    Measure beta = Measure::positive(rec.data_fit_marginals[i]);
    // fold sub-tolerance mass drift so the balanced solver accepts the pair
    beta.weights *= alpha.mass() / beta.mass();
    const double ot = ot_eps_value(alpha, beta, K, sopt);
    const double kl = kl_generalized(Measure::positive(spec.data.row(i).transpose()),
                                     Measure::positive(rec.data_fit_marginals[i] / spec.masses[i]));
    fit += spec.weights[i] * (ot / spec.masses[i] + spec.lambda_df[i] * kl);
  }
  (void)n;
  return spec.lambda * (reg + gterm) + fit;
}

}  // namespace pathlaw
