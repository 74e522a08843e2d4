#include "pathlaw/markov.hpp"

#include "pathlaw/rng.hpp"

#include <cmath>

namespace pathlaw {

namespace {

VectorXd softmax_row(const PairwiseOps& ops, const VectorXd& lcol, double inv_eps, int j) {
  const int n = ops.size();
  const MatrixXd& P = ops.points();
  VectorXd logits(n);
  double m = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < n; ++k) {
    const double c0 = 0.5 * (P.row(j) - P.row(k)).squaredNorm();
    logits[k] = lcol[k] - c0 * inv_eps;
    if (logits[k] > m) m = logits[k];
  }
  VectorXd out = (logits.array() - m).exp();
  out /= out.sum();
  return out;
}

}  // namespace

VectorXd MarkovPathLaw::transition_row(int gap, int state) const {
  return softmax_row(*ops, trans_lcol[gap], trans_inv_eps[gap], state);
}

VectorXd MarkovPathLaw::propagate(int gap, const VectorXd& marginal) const {
  const int n = ops->size();
  VectorXd out = VectorXd::Zero(n);
  for (int j = 0; j < n; ++j) {
    if (marginal[j] == 0.0) continue;
    out += marginal[j] * transition_row(gap, j);
  }
  return out;
}

MarkovPathLaw compose_markov(const Reconstruction& rec, double consistency_tol) {
  const int T = static_cast<int>(rec.times.size());
  if (static_cast<int>(rec.transport.size()) != T - 1)
    throw InvalidInput("compose_markov: reconstruction lacks transport couplings");

  // facing-marginal consistency, growth divided out and both sides normalized
  for (int g = 0; g + 1 < T - 1; ++g) {
    VectorXd lhs = rec.intermediates[g];
    VectorXd rhs = rec.marginals[g + 1].array() / rec.growth.row(g).transpose().array();
    lhs /= lhs.sum();
    rhs /= rhs.sum();
    const double tv = 0.5 * (lhs - rhs).lpNorm<1>();
    if (tv > consistency_tol)
      throw InvalidInput("compose_markov: coupling marginals inconsistent beyond tolerance");
  }

  MarkovPathLaw law;
  law.ops = rec.ops;
  law.times = rec.times;
  law.initial = rec.marginals[0] / rec.marginals[0].sum();
  law.trans_lcol.resize(T - 1);
  law.trans_inv_eps.resize(T - 1);
  for (int g = 0; g < T - 1; ++g) {
    law.trans_lcol[g] = rec.transport[g].lcol;
    law.trans_inv_eps[g] = rec.transport[g].inv_eps;
  }
  return law;
}

PathEnsemble sample_paths(const MarkovPathLaw& law, int n, std::uint64_t seed) {
  if (n < 1) throw InvalidInput("sample_paths: need at least one path");
  const int T = law.num_times();
  const int ns = law.ops->size();

  // per-row CDFs are built lazily and shared across paths
  std::vector<std::vector<VectorXd>> cdf(T - 1, std::vector<VectorXd>(0));
  for (auto& v : cdf) v.resize(ns);
  VectorXd init_cdf(ns);
  {
    double acc = 0.0;
    for (int k = 0; k < ns; ++k) {
      acc += law.initial[k];
      init_cdf[k] = acc;
    }
  }
  auto draw = [&](const VectorXd& c, double u) {
    const double target = u * c[ns - 1];
    int lo = 0, hi = ns - 1;
    while (lo < hi) {
      const int mid = (lo + hi) / 2;
      if (c[mid] < target) lo = mid + 1; else hi = mid;
    }
    return lo;
  };

  PathEnsemble ens;
  ens.times = law.times;
  ens.states.resize(n, T);
  for (int p = 0; p < n; ++p) {
    CounterRng rng(seed, CounterRng::Purpose::PathSampling, static_cast<std::uint64_t>(p));
    int cur = draw(init_cdf, rng.uniform());
    ens.states(p, 0) = cur;
    for (int g = 0; g < T - 1; ++g) {
      VectorXd& c = cdf[g][cur];
      if (c.size() == 0) {
        VectorXd row = law.transition_row(g, cur);
        c.resize(ns);
        double acc = 0.0;
        for (int k = 0; k < ns; ++k) {
          acc += row[k];
          c[k] = acc;
        }
      }
      cur = draw(c, rng.uniform());
      ens.states(p, g + 1) = cur;
    }
  }
  return ens;
}

MatrixXd PathEnsemble::flat_coords(const Support& support) const {
  const int T = static_cast<int>(times.size());
  const int d = support.dim();
  MatrixXd out(states.rows(), T * d);
  for (int p = 0; p < states.rows(); ++p)
    for (int t = 0; t < T; ++t)
      out.block(p, t * d, 1, d) = support.points.row(states(p, t));
  return out;
}

std::vector<DriftField> estimate_drift_per_time(const Reconstruction& rec) {
  const int T = static_cast<int>(rec.times.size());
  const PairwiseOps& ops = *rec.ops;
  const int n = ops.size();
  const int d = ops.dim();
  std::vector<DriftField> out(T - 1);
  for (int g = 0; g < T - 1; ++g) {
    const double dt = rec.times[g + 1] - rec.times[g];
    DriftField& f = out[g];
    f.velocity = MatrixXd::Zero(n, d);
    f.defined.assign(n, 0);
    for (int j = 0; j < n; ++j) {
      if (rec.marginals[g][j] <= 1e-12) continue;
      VectorXd row = softmax_row(ops, rec.transport[g].lcol, rec.transport[g].inv_eps, j);
      VectorXd mean = VectorXd::Zero(d);
      for (int k = 0; k < n; ++k)
        if (row[k] > 0.0) mean += row[k] * ops.points().row(k).transpose();
      f.velocity.row(j) = (mean.transpose() - ops.points().row(j)) / dt;
      f.defined[j] = 1;
    }
  }
  return out;
}

DriftField estimate_drift(const Reconstruction& rec, bool average_over_time, bool mass_weighted) {
  std::vector<DriftField> per_time = estimate_drift_per_time(rec);
  const PairwiseOps& ops = *rec.ops;
  const int n = ops.size();
  const int d = ops.dim();
  DriftField out;
  out.velocity = MatrixXd::Zero(n, d);
  out.defined.assign(n, 0);
  if (!average_over_time) {
    // first charged time wins; callers wanting per-time fields use the
    // per-time variant directly
    for (int j = 0; j < n; ++j)
      for (std::size_t g = 0; g < per_time.size() && !out.defined[j]; ++g)
        if (per_time[g].defined[j]) {
          out.velocity.row(j) = per_time[g].velocity.row(j);
          out.defined[j] = 1;
        }
    return out;
  }
  for (int j = 0; j < n; ++j) {
    double wsum = 0.0;
    VectorXd acc = VectorXd::Zero(d);
    for (std::size_t g = 0; g < per_time.size(); ++g) {
      if (!per_time[g].defined[j]) continue;
      const double w = mass_weighted ? rec.marginals[g][j] : 1.0;
      acc += w * per_time[g].velocity.row(j).transpose();
      wsum += w;
    }
    if (wsum > 0.0) {
      out.velocity.row(j) = acc.transpose() / wsum;
      out.defined[j] = 1;
    }
  }
  return out;
}

}  // namespace pathlaw
