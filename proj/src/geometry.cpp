#include "pathlaw/geometry.hpp"

#include <cmath>
#include <cstring>
#include <unordered_map>

namespace pathlaw {

namespace {

struct RowKey {
  const double* data;
  int d;
  bool operator==(const RowKey& o) const {
    return d == o.d && std::memcmp(data, o.data, sizeof(double) * d) == 0;
  }
};

struct RowKeyHash {
  std::size_t operator()(const RowKey& k) const {
    std::size_t h = 1469598103934665603ull;
    const unsigned char* p = reinterpret_cast<const unsigned char*>(k.data);
    for (std::size_t i = 0; i < sizeof(double) * k.d; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
    return h;
  }
};

}  // namespace

Support build_support(const SnapshotSeries& series, const std::vector<VectorXd>& extra) {
  if (series.snapshots.empty()) throw InvalidInput("build_support: empty series");
  const int d = series.dim();
  long total = 0;
  for (const auto& s : series.snapshots) {
    if (s.points.cols() != d)
      throw InvalidInput("build_support: dimension mismatch across time-points");
    total += s.points.rows();
  }
  for (const auto& e : extra) {
    if (e.size() != d) throw InvalidInput("build_support: extra point dimension mismatch");
  }
  total += static_cast<long>(extra.size());

  // row-major scratch so each row is a contiguous hash key
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> pts(total, d);
  long n = 0;
  std::unordered_map<RowKey, int, RowKeyHash> seen;
  seen.reserve(static_cast<std::size_t>(total));
  auto push = [&](const double* row) {
    std::memcpy(pts.row(n).data(), row, sizeof(double) * d);
    RowKey key{pts.row(n).data(), d};
    if (seen.emplace(key, static_cast<int>(n)).second) ++n;
  };
  std::vector<double> scratch(d);
  for (const auto& s : series.snapshots) {
    for (int i = 0; i < s.points.rows(); ++i) {
      for (int j = 0; j < d; ++j) scratch[j] = s.points(i, j);
      push(scratch.data());
    }
  }
  for (const auto& e : extra) {
    for (int j = 0; j < d; ++j) scratch[j] = e[j];
    push(scratch.data());
  }

  Support sup;
  sup.points = pts.topRows(n);
  return sup;
}

Support support_from_matrix(const MatrixXd& pts) {
  if (pts.rows() == 0) throw InvalidInput("support_from_matrix: empty point set");
  Support s;
  s.points = pts;
  return s;
}

std::vector<int> locate_points(const Support& support, const MatrixXd& pts) {
  const int d = support.dim();
  if (pts.cols() != d) throw InvalidInput("locate_points: dimension mismatch");
  // Row-major copies so keys hash over contiguous bytes.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> sup = support.points;
  std::unordered_map<RowKey, int, RowKeyHash> index;
  index.reserve(static_cast<std::size_t>(sup.rows()));
  for (int i = 0; i < sup.rows(); ++i) index.emplace(RowKey{sup.row(i).data(), d}, i);

  std::vector<int> out(pts.rows());
  std::vector<double> scratch(d);
  for (int i = 0; i < pts.rows(); ++i) {
    for (int j = 0; j < d; ++j) scratch[j] = pts(i, j);
    auto it = index.find(RowKey{scratch.data(), d});
    if (it == index.end()) throw InvalidInput("locate_points: point not on support");
    out[i] = it->second;
  }
  return out;
}

double mean_squared_distance(const MatrixXd& a_points, const MatrixXd& b_points) {
  if (a_points.rows() == 0 || b_points.rows() == 0)
    throw InvalidInput("mean_squared_distance: empty cloud");
  if (a_points.cols() != b_points.cols())
    throw InvalidInput("mean_squared_distance: dimension mismatch");
  // E||x-y||^2 = E||x||^2 + E||y||^2 - 2 <Ex, Ey>
  const double ex2 = a_points.rowwise().squaredNorm().mean();
  const double ey2 = b_points.rowwise().squaredNorm().mean();
  const VectorXd mx = a_points.colwise().mean();
  const VectorXd my = b_points.colwise().mean();
  return ex2 + ey2 - 2.0 * mx.dot(my);
}

CostMatrix cost_matrix(const Support& support, double scale) {
  const int n = support.size();
  CostMatrix c;
  c.scale = scale;
  c.entries.resize(n, n);
  // mirror-filled so symmetry is exact, zero diagonal
  for (int i = 0; i < n; ++i) {
    c.entries(i, i) = 0.0;
    for (int j = i + 1; j < n; ++j) {
      const double v = scale * 0.5 * (support.points.row(i) - support.points.row(j)).squaredNorm();
      c.entries(i, j) = v;
      c.entries(j, i) = v;
    }
  }
  return c;
}

GibbsKernel gibbs_kernel(const Support& support, double epsilon,
                         const std::optional<std::pair<MatrixXd, MatrixXd>>& normalize_cost,
                         bool row_normalize) {
  if (!(epsilon > 0.0)) throw InvalidInput("gibbs_kernel: epsilon must be positive");
  double scale = 1.0;
  if (normalize_cost) {
    const double denom = mean_squared_distance(normalize_cost->first, normalize_cost->second);
    if (!(denom > 0.0))
      throw InvalidInput("gibbs_kernel: degenerate cost normalization (all points identical)");
    scale = 1.0 / denom;
  }
  CostMatrix c = cost_matrix(support, scale);
  GibbsKernel k;
  k.epsilon = epsilon;
  k.cost_scale = scale;
  k.log_entries = -c.entries / epsilon;
  if (row_normalize) {
    const int n = support.size();
    for (int i = 0; i < n; ++i) {
      const double m = k.log_entries.row(i).maxCoeff();
      const double lse = m + std::log((k.log_entries.row(i).array() - m).exp().sum());
      k.log_entries.row(i).array() -= lse;
    }
    k.row_normalized = true;
  }
  k.entries = k.log_entries.array().exp();
  return k;
}

}  // namespace pathlaw
