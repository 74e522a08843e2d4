#pragma once

#include <Eigen/Core>
#include <optional>
#include <stdexcept>
#include <vector>

namespace pathlaw {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct InvalidInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One snapshot: samples drawn at a single measurement time.
struct Snapshot {
  double time = 0.0;
  MatrixXd points;  // N_i x d
  bool undersampled = false;  // fewer survivors than requested draws
};

// Ordered snapshot series; the raw input of every pipeline.
struct SnapshotSeries {
  std::vector<Snapshot> snapshots;

  int dim() const { return snapshots.empty() ? 0 : static_cast<int>(snapshots.front().points.cols()); }
  int num_times() const { return static_cast<int>(snapshots.size()); }
};

// Discrete support: the finite state space every measure lives on.
struct Support {
  MatrixXd points;  // n x d, row-major order preserved from construction
  int size() const { return static_cast<int>(points.rows()); }
  int dim() const { return static_cast<int>(points.cols()); }
};

struct CostMatrix {
  MatrixXd entries;   // n x n, entries scale * 0.5*||x_i-x_j||^2
  double scale = 1.0;
};

struct GibbsKernel {
  MatrixXd entries;       // n x n, exp of log_entries (0 when underflowed)
  MatrixXd log_entries;   // exact -scale*C/eps (minus row logsums if normalized)
  double epsilon = 0.0;
  double cost_scale = 1.0;
  bool row_normalized = false;
};

// Union of all sampled points plus optional extras, exact duplicates removed,
// insertion order preserved.
Support build_support(const SnapshotSeries& series,
                      const std::vector<VectorXd>& extra = {});

Support support_from_matrix(const MatrixXd& pts);

// Mean squared distance E||x - y||^2 under the product of two empirical
// measures; the cost-normalization denominator.
double mean_squared_distance(const MatrixXd& a_points, const MatrixXd& b_points);

CostMatrix cost_matrix(const Support& support, double scale = 1.0);

// K_ij = exp(-scale * 0.5*||x_i-x_j||^2 / eps). When normalize_cost is given
// as a pair of point clouds, scale = 1 / E||x-y||^2 under their product.
GibbsKernel gibbs_kernel(const Support& support, double epsilon,
                         const std::optional<std::pair<MatrixXd, MatrixXd>>& normalize_cost = std::nullopt,
                         bool row_normalize = false);

// Maps each row of `pts` to its index in `support` (exact coordinate match).
std::vector<int> locate_points(const Support& support, const MatrixXd& pts);

}  // namespace pathlaw
