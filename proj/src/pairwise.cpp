#include "pathlaw/pairwise.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <thread>

namespace pathlaw {

namespace {

constexpr double kExpCut = -45.0;  // exp(-45) ~ 2.9e-20: below accumulation noise

// sum of exp(buf - m) over blocks whose maximum clears the cutoff
double exp_sum_skip(const double* buf, int n, double m) {
  constexpr int BS = 16;
  using Block = Eigen::Array<double, BS, 1>;
  double s = 0.0;
  int k = 0;
  for (; k + BS <= n; k += BS) {
    Eigen::Map<const Block> b(buf + k);
    if (b.maxCoeff() - m < kExpCut) continue;
    s += (b - m).exp().sum();
  }
  for (; k < n; ++k) {
    const double t = buf[k] - m;
    if (t >= kExpCut) s += std::exp(t);
  }
  return s;
}

// sum of f * exp(buf) over blocks whose maximum clears the cutoff (exponents <= ~0)
double weighted_exp_sum_skip(const double* buf, const double* f, int n) {
  constexpr int BS = 16;
  using Block = Eigen::Array<double, BS, 1>;
  double s = 0.0;
  int k = 0;
  for (; k + BS <= n; k += BS) {
    Eigen::Map<const Block> b(buf + k);
    if (b.maxCoeff() < kExpCut) continue;
    s += (Eigen::Map<const Block>(f + k) * b.exp()).sum();
  }
  for (; k < n; ++k)
    if (buf[k] >= kExpCut) s += f[k] * std::exp(buf[k]);
  return s;
}

}  // namespace

namespace {

// kd-style recursive median ordering: spatial neighbors end up in nearby
// index blocks, so the blocked exp passes can skip most of each row
void spatial_order(const MatrixXd& pts, std::vector<int>& idx, int lo, int hi) {
  if (hi - lo <= 16) return;
  const int d = static_cast<int>(pts.cols());
  int axis = 0;
  double best = -1.0;
  for (int c = 0; c < d; ++c) {
    double mn = pts(idx[lo], c), mx = mn;
    for (int i = lo + 1; i < hi; ++i) {
      const double v = pts(idx[i], c);
      mn = std::min(mn, v);
      mx = std::max(mx, v);
    }
    if (mx - mn > best) {
      best = mx - mn;
      axis = c;
    }
  }
  const int mid = lo + (hi - lo) / 2;
  std::nth_element(idx.begin() + lo, idx.begin() + mid, idx.begin() + hi,
                   [&](int a, int b) {
                     return pts(a, axis) < pts(b, axis) || (pts(a, axis) == pts(b, axis) && a < b);
                   });
  spatial_order(pts, idx, lo, mid);
  spatial_order(pts, idx, mid, hi);
}

}  // namespace

PairwiseOps::PairwiseOps(const MatrixXd& points, int n_threads, std::size_t kernel_cache_bytes)
    : n_(static_cast<int>(points.rows())),
      d_(static_cast<int>(points.cols())),
      n_threads_(n_threads < 1 ? 1 : n_threads),
      cache_budget_(kernel_cache_bytes) {
  std::vector<int> order(n_);
  for (int i = 0; i < n_; ++i) order[i] = i;
  spatial_order(points, order, 0, n_);
  perm_.resize(n_);      // internal slot -> caller index
  inv_perm_.resize(n_);  // caller index -> internal slot
  for (int s = 0; s < n_; ++s) {
    perm_[s] = order[s];
    inv_perm_[order[s]] = s;
  }
  pts_caller_ = points;
  pts_.resize(n_, d_);
  for (int s = 0; s < n_; ++s) pts_.row(s) = points.row(perm_[s]);
  half_sq_ = 0.5 * pts_.rowwise().squaredNorm();
  // the Gram matrix turns every pairwise pass into vectorized row sweeps;
  // beyond the budget the dot products are expanded on the fly
  if (static_cast<std::size_t>(n_) * n_ * sizeof(double) <= cache_budget_) {
    gram_.resize(n_, n_);
    gram_.noalias() = pts_ * pts_.transpose();
  }
}

void PairwiseOps::parallel_rows(int n, const std::function<void(int, int)>& body) const {
  if (n_threads_ <= 1 || n < 256) {
    body(0, n);
    return;
  }
  const int t = n_threads_;
  std::vector<std::thread> pool;
  pool.reserve(t - 1);
  const int chunk = (n + t - 1) / t;
  for (int i = 1; i < t; ++i) {
    const int lo = i * chunk;
    const int hi = std::min(n, lo + chunk);
    if (lo < hi) pool.emplace_back(body, lo, hi);
  }
  body(0, std::min(n, chunk));
  for (auto& th : pool) th.join();
}

void PairwiseOps::logsumexp_rows(const VectorXd& y, double inv_eps, VectorXd& out) const {
  out.resize(n_);
  VectorXd out_int(n_);
  // arg_jk = (y_k - inv_eps*h_k) + inv_eps*<x_j, x_k> - inv_eps*h_j
  VectorXd w(n_);
  for (int sidx = 0; sidx < n_; ++sidx) w[sidx] = y[perm_[sidx]] - inv_eps * half_sq_[sidx];
  const int n = n_;
  const int d = d_;

  if (gram_.size()) {
    parallel_rows(n, [&](int lo, int hi) {
      Eigen::ArrayXd buf(n);
      for (int j = lo; j < hi; ++j) {
        buf = w.array() + inv_eps * gram_.row(j).transpose().array();
        const double m = buf.maxCoeff();
        if (!std::isfinite(m)) {
          out_int[j] = m - inv_eps * half_sq_[j];
          continue;
        }
        const double s = exp_sum_skip(buf.data(), n, m);
        out_int[j] = m + std::log(s) - inv_eps * half_sq_[j];
      }
    });
    for (int sidx = 0; sidx < n_; ++sidx) out[perm_[sidx]] = out_int[sidx];
    return;
  }

  parallel_rows(n, [&](int lo, int hi) {
    Eigen::ArrayXd buf(n);
    for (int j = lo; j < hi; ++j) {
      buf = w.array();
      for (int c = 0; c < d; ++c)
        buf += (inv_eps * pts_(j, c)) * Eigen::Map<const VectorXd, 0, Eigen::InnerStride<>>(
                                            pts_.data() + c, n, Eigen::InnerStride<>(d))
                                            .array();
      const double m = buf.maxCoeff();
      if (!std::isfinite(m)) {
        out_int[j] = m - inv_eps * half_sq_[j];
        continue;
      }
      double s = 0.0;
      for (int k = 0; k < n; ++k) {
        const double t = buf[k] - m;
        if (t >= kExpCut) s += std::exp(t);
      }
      out_int[j] = m + std::log(s) - inv_eps * half_sq_[j];
    }
  });
  for (int sidx = 0; sidx < n_; ++sidx) out[perm_[sidx]] = out_int[sidx];
}

void PairwiseOps::weighted_expsum(const VectorXd& f, const VectorXd& h, const VectorXd& y,
                                  double inv_eps, VectorXd& out) const {
  out.resize(n_);
  VectorXd out_int(n_);
  VectorXd w(n_), fi(n_), yi(n_);
  for (int sidx = 0; sidx < n_; ++sidx) {
    w[sidx] = h[perm_[sidx]] - inv_eps * half_sq_[sidx];  // source-side shift
    fi[sidx] = f[perm_[sidx]];
    yi[sidx] = y[perm_[sidx]];
  }
  const int n = n_;
  const int d = d_;

  if (gram_.size()) {
    parallel_rows(n, [&](int lo, int hi) {
      Eigen::ArrayXd buf(n);
      for (int k = lo; k < hi; ++k) {
        const double q = yi[k] - inv_eps * half_sq_[k];
        buf = w.array() + q + inv_eps * gram_.row(k).transpose().array();
        out_int[k] = weighted_exp_sum_skip(buf.data(), fi.data(), n);
      }
    });
  } else {
    parallel_rows(n, [&](int lo, int hi) {
      Eigen::ArrayXd buf(n);
      for (int k = lo; k < hi; ++k) {
        const double q = yi[k] - inv_eps * half_sq_[k];
        buf = w.array() + q;
        for (int c = 0; c < d; ++c)
          buf += (inv_eps * pts_(k, c)) * Eigen::Map<const VectorXd, 0, Eigen::InnerStride<>>(
                                              pts_.data() + c, n, Eigen::InnerStride<>(d))
                                              .array();
        double s = 0.0;
        for (int j = 0; j < n; ++j)
          if (buf[j] >= kExpCut) s += fi[j] * std::exp(buf[j]);
        out_int[k] = s;
      }
    });
  }
  for (int sidx = 0; sidx < n_; ++sidx) out[perm_[sidx]] = out_int[sidx];
}

const MatrixXd* PairwiseOps::cached_kernel(double inv_eps) const {
  const std::size_t bytes = static_cast<std::size_t>(n_) * n_ * sizeof(double);
  if (bytes > cache_budget_) return nullptr;
  auto it = kernel_cache_.find(inv_eps);
  if (it != kernel_cache_.end()) return it->second.get();
  auto K = std::make_unique<MatrixXd>(n_, n_);
  MatrixXd& ker = *K;
  const int n = n_;
  parallel_rows(n, [&](int lo, int hi) {
    Eigen::ArrayXd buf(n);
    for (int j = lo; j < hi; ++j) {
      buf = -inv_eps *
            (half_sq_.array() + half_sq_[j] - gram_.row(j).transpose().array());
      ker.col(j) = buf.exp();  // kernel is symmetric; fill a column per row sweep
    }
  });
  const MatrixXd* raw = K.get();
  kernel_cache_.emplace(inv_eps, std::move(K));
  return raw;
}

void PairwiseOps::kernel_matmul(double inv_eps, const MatrixXd& B, MatrixXd& out) const {
  const int cols = static_cast<int>(B.cols());
  out.resize(n_, cols);
  MatrixXd Bi(n_, cols), out_int(n_, cols);
  for (int sidx = 0; sidx < n_; ++sidx) Bi.row(sidx) = B.row(perm_[sidx]);
  if (const MatrixXd* K = cached_kernel(inv_eps)) {
    if (n_threads_ <= 1 || n_ < 256) {
      out_int.noalias() = (*K) * Bi;
    } else {
      parallel_rows(n_, [&](int lo, int hi) {
        out_int.middleRows(lo, hi - lo).noalias() = K->middleRows(lo, hi - lo) * Bi;
      });
    }
  } else {
    const int d = d_;
    const int n = n_;
    parallel_rows(n, [&](int lo, int hi) {
      std::vector<double> acc(cols);
      for (int j = lo; j < hi; ++j) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (int k = 0; k < n; ++k) {
          double dot = 0.0;
          for (int c = 0; c < d; ++c) dot += pts_(j, c) * pts_(k, c);
          const double t = -inv_eps * (half_sq_[j] + half_sq_[k] - dot);
          if (t < -745.0) continue;
          const double e = std::exp(t);
          for (int c = 0; c < cols; ++c) acc[c] += e * Bi(k, c);
        }
        for (int c = 0; c < cols; ++c) out_int(j, c) = acc[c];
      }
    });
  }
  for (int sidx = 0; sidx < n_; ++sidx) out.row(perm_[sidx]) = out_int.row(sidx);
}

void PairwiseOps::row_logsums(double inv_eps, VectorXd& out) const {
  VectorXd zero = VectorXd::Zero(n_);
  logsumexp_rows(zero, inv_eps, out);
}

}  // namespace pathlaw
