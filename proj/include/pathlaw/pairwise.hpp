#pragma once

#include <Eigen/Core>
#include <functional>
#include <map>
#include <memory>
#include <vector>

namespace pathlaw {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using RowMajorMatrixXd = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Streaming pairwise-cost operations on a fixed point set. The base cost is
// C0_jk = 0.5*||x_j - x_k||^2; every operation takes inv_eps so the effective
// exponent is -C0_jk * inv_eps (inv_eps = cost_scale / epsilon). Costs are
// expanded from coordinates on the fly, so memory stays O(n*d) and the inner
// loops run out of cache. Row-partition threading keeps results bitwise
// identical for any thread count (each output element is a sequential
// reduction over the full inner range).
class PairwiseOps {
 public:
  explicit PairwiseOps(const MatrixXd& points, int n_threads = 1,
                       std::size_t kernel_cache_bytes = 800ull << 20);

  int size() const { return n_; }
  int dim() const { return d_; }
  int threads() const { return n_threads_; }
  void set_threads(int t) { n_threads_ = t < 1 ? 1 : t; }

  // out_j = logsumexp_k ( y_k - C0_jk * inv_eps )
  void logsumexp_rows(const VectorXd& y, double inv_eps, VectorXd& out) const;

  // out_k = sum_j f_j * exp( h_j + y_k - C0_jk * inv_eps ).
  // The caller must arrange h, y so that every exponent is <= ~0 (softmax
  // weights); entries below exp(-45) are dropped.
  void weighted_expsum(const VectorXd& f, const VectorXd& h, const VectorXd& y,
                       double inv_eps, VectorXd& out) const;

  // out = exp(-C0 * inv_eps) * B, batched over columns. Uses a cached dense
  // kernel when it fits the cache budget, otherwise streams.
  void kernel_matmul(double inv_eps, const MatrixXd& B, MatrixXd& out) const;

  // Row log-sums of the kernel: out_j = logsumexp_k(-C0_jk * inv_eps).
  void row_logsums(double inv_eps, VectorXd& out) const;

  const RowMajorMatrixXd& points() const { return pts_caller_; }

 private:
  void parallel_rows(int n, const std::function<void(int, int)>& body) const;
  const MatrixXd* cached_kernel(double inv_eps) const;

  int n_ = 0, d_ = 0;
  int n_threads_ = 1;
  std::size_t cache_budget_ = 0;
  // row-major coordinates in spatially sorted order, half squared norms,
  // optional cached Gram matrix; all public indices are in caller order and
  // permuted at the boundary
  RowMajorMatrixXd pts_;         // sorted order
  RowMajorMatrixXd pts_caller_;  // caller order, for coordinate lookups
  VectorXd half_sq_;
  RowMajorMatrixXd gram_;  // P P^T when it fits the cache budget
  std::vector<int> perm_, inv_perm_;  // caller index -> internal slot
  mutable std::map<double, std::unique_ptr<MatrixXd>> kernel_cache_;
};

}  // namespace pathlaw
