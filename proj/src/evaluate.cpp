#include "pathlaw/evaluate.hpp"

#include <cmath>

namespace pathlaw {

namespace {

bool uniform_weights(const VectorXd& w) {
  const double ref = w[0];
  return ((w.array() - ref).abs() <= 1e-12 * ref).all();
}

}  // namespace

double w2_exact(const VectorXd& wa, const MatrixXd& a_points, const VectorXd& wb,
                const MatrixXd& b_points) {
  if (a_points.cols() != b_points.cols()) throw InvalidInput("w2_exact: dimension mismatch");
  const double ma = wa.sum(), mb = wb.sum();
  if (!(ma > 0) || !(mb > 0)) throw InvalidInput("w2_exact: zero-mass input");
  if (std::abs(ma - mb) > 1e-9 * std::max(ma, mb))
    throw InvalidInput("w2_exact: mass mismatch (normalize first)");

  // drop empty atoms
  std::vector<int> ia, ib;
  for (int i = 0; i < wa.size(); ++i)
    if (wa[i] > 0) ia.push_back(i);
  for (int j = 0; j < wb.size(); ++j)
    if (wb[j] > 0) ib.push_back(j);
  const int n1 = static_cast<int>(ia.size());
  const int n2 = static_cast<int>(ib.size());

  VectorXd a(n1), b(n2);
  MatrixXd A(n1, a_points.cols()), B(n2, b_points.cols());
  for (int i = 0; i < n1; ++i) {
    a[i] = wa[ia[i]] / ma;
    A.row(i) = a_points.row(ia[i]);
  }
  for (int j = 0; j < n2; ++j) {
    b[j] = wb[ib[j]] / mb;
    B.row(j) = b_points.row(ib[j]);
  }

  MatrixXd cost(n1, n2);
  const VectorXd sa = A.rowwise().squaredNorm();
  const VectorXd sb = B.rowwise().squaredNorm();
  cost.noalias() = -2.0 * A * B.transpose();
  cost.colwise() += sa;
  cost.rowwise() += sb.transpose();
  cost = cost.cwiseMax(0.0);

  double value;
  if (n1 == n2 && uniform_weights(a) && uniform_weights(b)) {
    value = hungarian_assignment(cost) / static_cast<double>(n1);
  } else {
    value = network_simplex_transport(a, b, cost);
  }
  return std::sqrt(std::max(0.0, value));
}

double w2_exact(const Measure& alpha, const Measure& beta, const Support& coords) {
  return w2_exact(alpha.weights, coords.points, beta.weights, coords.points);
}

double w2_paths_empirical(const MatrixXd& flat_a, const MatrixXd& flat_b, int num_times) {
  if (flat_a.cols() != flat_b.cols())
    throw InvalidInput("w2_paths_empirical: path shapes differ");
  if (flat_a.rows() != flat_b.rows())
    throw InvalidInput("w2_paths_empirical: ensembles must have equal sizes");
  const int n = static_cast<int>(flat_a.rows());
  MatrixXd cost(n, n);
  const VectorXd sa = flat_a.rowwise().squaredNorm();
  const VectorXd sb = flat_b.rowwise().squaredNorm();
  cost.noalias() = -2.0 * flat_a * flat_b.transpose();
  cost.colwise() += sa;
  cost.rowwise() += sb.transpose();
  cost = cost.cwiseMax(0.0) / static_cast<double>(num_times);
  const double value = hungarian_assignment(cost) / static_cast<double>(n);
  return std::sqrt(std::max(0.0, value));
}

PathDistanceStats summarize(const std::vector<double>& values) {
  PathDistanceStats s;
  s.values = values;
  if (values.empty()) return s;
  double m = 0.0;
  for (double v : values) m += v;
  m /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - m) * (v - m);
  var /= std::max<std::size_t>(1, values.size() - 1);
  s.mean = m;
  s.sd = std::sqrt(var);
  return s;
}

double drift_similarity(const MatrixXd& v_hat, const MatrixXd& v_true,
                        const std::vector<char>& defined, int* skipped) {
  if (v_hat.rows() != v_true.rows() || v_hat.cols() != v_true.cols())
    throw InvalidInput("drift_similarity: field shapes differ");
  double acc = 0.0;
  int used = 0, skip = 0;
  for (int i = 0; i < v_hat.rows(); ++i) {
    if (!defined.empty() && !defined[i]) continue;
    const double na = v_hat.row(i).norm();
    const double nb = v_true.row(i).norm();
    if (na == 0.0 || nb == 0.0) {
      ++skip;
      continue;
    }
    const double c = v_hat.row(i).dot(v_true.row(i)) / (na * nb);
    acc += 0.5 * (1.0 - std::min(1.0, std::max(-1.0, c)));
    ++used;
  }
  if (skipped) *skipped = skip;
  if (used == 0) throw InvalidInput("drift_similarity: no comparable points");
  return acc / used;
}

}  // namespace pathlaw
