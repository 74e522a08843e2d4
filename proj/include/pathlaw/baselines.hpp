#pragma once

#include "pathlaw/solver.hpp"

#include <optional>

namespace pathlaw {

// Pairwise-gluing baseline: marginals fixed to the empirical snapshots,
// couplings from independent entropic bridges between consecutive times.
// With growth factors the source marginal is reweighted by g and
// renormalized before bridging (first-order handling).
Reconstruction gluing_reconstruction(const SnapshotSeries& series, const Support& support,
                                     double sigma2,
                                     const std::optional<MatrixXd>& growth = std::nullopt,
                                     const SinkhornOptions& opt = {1e-9, 100000, true});

// Temporal kernel smoothing: rho~_i proportional to
// sum_j exp(-(t_i - t_j)^2 / h^2) rho_j, renormalized to unit mass.
MatrixXd kernel_smooth(const MatrixXd& data, const VectorXd& times, double bandwidth);

// Empirical snapshot weights on the shared support, one row per time.
MatrixXd empirical_weights(const SnapshotSeries& series, const Support& support);

}  // namespace pathlaw
