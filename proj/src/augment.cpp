#include "pathlaw/augment.hpp"

#include "pathlaw/rng.hpp"

#include <cmath>

namespace pathlaw {

MatrixXd augment_support(const Reconstruction& rec, const Support& support, int time_i,
                         int time_j, const AugmentOptions& opt) {
  if (!(opt.s2 > 0)) throw InvalidInput("augment_support: s2 must be positive");
  if (opt.k < 1) throw InvalidInput("augment_support: k must be at least 1");
  const int T = static_cast<int>(rec.times.size());
  if (time_i < 0 || time_j <= time_i || time_j >= T)
    throw InvalidInput("augment_support: bad time pair");

  VectorXd a = rec.marginals[time_i];
  VectorXd b = rec.marginals[time_j];
  if (!(a.sum() > 0) || !(b.sum() > 0))
    throw InvalidInput("augment_support: empty marginal");
  a /= a.sum();
  b /= b.sum();

  GibbsKernel K = gibbs_kernel(support, opt.s2);
  SinkhornOptions sopt;
  sopt.tol = 1e-9;
  sopt.max_iter = 100000;
  sopt.eps_annealing = true;
  SinkhornResult sr = sinkhorn(Measure::positive(a), Measure::positive(b), K, sopt);

  // flatten the coupling into a sampling CDF
  const int n = support.size();
  const MatrixXd& gamma = sr.coupling.entries;
  std::vector<double> cdf(static_cast<std::size_t>(n) * n);
  double acc = 0.0;
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      acc += gamma(r, c);
      cdf[static_cast<std::size_t>(r) * n + c] = acc;
    }

  const double stddev =
      opt.literal_covariance ? std::sqrt(std::sqrt(opt.s2) / 2.0) : std::sqrt(opt.s2) / 2.0;

  const int d = support.dim();
  MatrixXd out(opt.k, d);
  for (int s = 0; s < opt.k; ++s) {
    CounterRng rng(opt.seed, CounterRng::Purpose::Augmentation,
                   (static_cast<std::uint64_t>(time_i) << 40) ^
                       (static_cast<std::uint64_t>(time_j) << 24) ^ static_cast<std::uint64_t>(s));
    const double target = rng.uniform() * acc;
    std::size_t lo = 0, hi = cdf.size() - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (cdf[mid] < target) lo = mid + 1; else hi = mid;
    }
    const int r = static_cast<int>(lo / n);
    const int c = static_cast<int>(lo % n);
    for (int cc = 0; cc < d; ++cc) {
      const double mid = 0.5 * (support.points(r, cc) + support.points(c, cc));
      out(s, cc) = mid + stddev * rng.normal();
    }
  }
  return out;
}

}  // namespace pathlaw
