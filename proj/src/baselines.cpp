#include "pathlaw/baselines.hpp"

#include "pathlaw/geometry.hpp"

#include <cmath>

namespace pathlaw {

MatrixXd empirical_weights(const SnapshotSeries& series, const Support& support) {
  const int T = series.num_times();
  MatrixXd data = MatrixXd::Zero(T, support.size());
  for (int i = 0; i < T; ++i) {
    const MatrixXd& pts = series.snapshots[i].points;
    if (pts.rows() == 0) throw InvalidInput("empirical_weights: empty snapshot");
    const std::vector<int> idx = locate_points(support, pts);
    const double w = 1.0 / static_cast<double>(pts.rows());
    for (int k : idx) data(i, k) += w;
  }
  return data;
}

Reconstruction gluing_reconstruction(const SnapshotSeries& series, const Support& support,
                                     double sigma2, const std::optional<MatrixXd>& growth,
                                     const SinkhornOptions& opt) {
  const int T = series.num_times();
  if (T < 2) throw InvalidInput("gluing_reconstruction: need at least two time-points");
  const MatrixXd data = empirical_weights(series, support);
  const int n = support.size();

  Reconstruction rec;
  rec.ops = std::make_shared<PairwiseOps>(support.points);
  rec.times.resize(T);
  for (int i = 0; i < T; ++i) rec.times[i] = series.snapshots[i].time;
  rec.growth = MatrixXd::Ones(T - 1, n);
  rec.marginals.resize(T);
  rec.data_marginals.resize(T);
  for (int i = 0; i < T; ++i) {
    rec.marginals[i] = data.row(i).transpose();
    rec.data_marginals[i] = rec.marginals[i];
  }
  rec.intermediates.resize(T - 1);
  rec.transport.resize(T - 1);

  for (int g = 0; g < T - 1; ++g) {
    const double dt = rec.times[g + 1] - rec.times[g];
    if (!(dt > 0)) throw InvalidInput("gluing_reconstruction: times must increase");
    const double eps = sigma2 * dt;

    // restrict the bridge to the charged atoms of both snapshots
    std::vector<int> src, dst;
    for (int j = 0; j < n; ++j) {
      if (data(g, j) > 0) src.push_back(j);
      if (data(g + 1, j) > 0) dst.push_back(j);
    }
    const int ns = static_cast<int>(src.size());
    const int nd = static_cast<int>(dst.size());
    MatrixXd sub(ns + nd, support.dim());
    for (int a = 0; a < ns; ++a) sub.row(a) = support.points.row(src[a]);
    for (int b = 0; b < nd; ++b) sub.row(ns + b) = support.points.row(dst[b]);
    Support sub_support = support_from_matrix(sub);

    VectorXd alpha = VectorXd::Zero(ns + nd);
    VectorXd beta = VectorXd::Zero(ns + nd);
    for (int a = 0; a < ns; ++a) alpha[a] = data(g, src[a]);
    for (int b = 0; b < nd; ++b) beta[ns + b] = data(g + 1, dst[b]);
    if (growth) {
      for (int a = 0; a < ns; ++a) alpha[a] *= (*growth)(g, src[a]);
      alpha /= alpha.sum();
    }

    GibbsKernel K = gibbs_kernel(sub_support, eps);
    // cold kernels can stall near the deterministic-transport limit; fall
    // back through a tolerance ladder rather than refusing the bridge
    SinkhornResult sr;
    SinkhornOptions stage = opt;
    for (int attempt = 0;; ++attempt) {
      try {
        sr = sinkhorn(Measure::positive(alpha), Measure::positive(beta), K, stage);
        break;
      } catch (const SinkhornFailure&) {
        stage.tol *= 100.0;
        if (attempt >= 3 || stage.tol > 1e-4) throw;
      }
    }

    LogCoupling& lc = rec.transport[g];
    lc.inv_eps = 1.0 / eps;
    lc.lrow = VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
    lc.lcol = VectorXd::Constant(n, -std::numeric_limits<double>::infinity());
    for (int a = 0; a < ns; ++a)
      if (alpha[a] > 0) lc.lrow[src[a]] = sr.potentials.u[a] / eps;
    for (int b = 0; b < nd; ++b)
      if (beta[ns + b] > 0) lc.lcol[dst[b]] = sr.potentials.v[ns + b] / eps;
    rec.intermediates[g] = data.row(g + 1).transpose();
  }
  return rec;
}

MatrixXd kernel_smooth(const MatrixXd& data, const VectorXd& times, double bandwidth) {
  if (!(bandwidth > 0)) throw InvalidInput("kernel_smooth: bandwidth must be positive");
  const int T = static_cast<int>(times.size());
  if (data.rows() != T) throw InvalidInput("kernel_smooth: data/times mismatch");
  MatrixXd out(T, data.cols());
  for (int i = 0; i < T; ++i) {
    VectorXd acc = VectorXd::Zero(data.cols());
    for (int j = 0; j < T; ++j) {
      const double s = (times[i] - times[j]) / bandwidth;
      acc += std::exp(-s * s) * data.row(j).transpose();
    }
    out.row(i) = acc.transpose() / acc.sum();
  }
  return out;
}

}  // namespace pathlaw
