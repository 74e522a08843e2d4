#pragma once

#include "pathlaw/solver.hpp"

namespace pathlaw {

struct AugmentOptions {
  double s2 = 0.1;        // bridge noise level, should exceed typical sigma2*dt
  int k = 10;             // points to add per time pair
  std::uint64_t seed = 0;
  // The displayed midpoint covariance is (s/2) I_d; set false for the
  // variance-consistent s^2/4 reading.
  bool literal_covariance = true;
};

// Brownian-bridge midpoints of pairs sampled from the entropic coupling
// between the recovered marginals at times i and j (= i+2 in the standard
// scheme). Returns k new points; the caller unions them with the support
// and re-solves.
MatrixXd augment_support(const Reconstruction& rec, const Support& support, int time_i,
                         int time_j, const AugmentOptions& opt);

}  // namespace pathlaw
