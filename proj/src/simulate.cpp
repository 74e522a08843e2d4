#include "pathlaw/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pathlaw {

namespace {

constexpr std::uint64_t kStepMask = 0xFFFFF;
constexpr std::uint64_t kBirthStep = 0xFFFFF;
constexpr std::uint64_t kShuffleStream = 0xFFFFE;

std::uint64_t stream_id(std::uint64_t run, std::uint64_t particle, std::uint64_t step) {
  return (run << 44) | ((particle & 0xFFFFFF) << 20) | (step & kStepMask);
}

CounterRng particle_rng(std::uint64_t seed, std::uint64_t run, std::uint64_t particle,
                        std::uint64_t step) {
  return CounterRng(seed, CounterRng::Purpose::Simulation, stream_id(run, particle, step));
}

}  // namespace

double PotentialSpec::value(const VectorXd& x) const {
  switch (kind) {
    case PotentialKind::Tristable:
    case PotentialKind::Bistable: {
      double p = well_coeff;
      for (const auto& w : wells) p *= (x - w).squaredNorm();
      return p;
    }
    case PotentialKind::Linear:
      return linear_slope.dot(x);
    case PotentialKind::Quadratic:
      return 0.5 * quad_c * x.squaredNorm();
    case PotentialKind::Custom:
      return custom_value(x);
  }
  return 0.0;
}

VectorXd PotentialSpec::gradient(const VectorXd& x) const {
  switch (kind) {
    case PotentialKind::Tristable:
    case PotentialKind::Bistable: {
      const int k = static_cast<int>(wells.size());
      std::vector<double> a(k);
      for (int i = 0; i < k; ++i) a[i] = (x - wells[i]).squaredNorm();
      VectorXd g = VectorXd::Zero(x.size());
      for (int i = 0; i < k; ++i) {
        double rest = well_coeff;
        for (int j = 0; j < k; ++j)
          if (j != i) rest *= a[j];
        g += 2.0 * rest * (x - wells[i]);
      }
      return g;
    }
    case PotentialKind::Linear:
      return linear_slope;
    case PotentialKind::Quadratic:
      return quad_c * x;
    case PotentialKind::Custom:
      return custom_grad(x);
  }
  return VectorXd::Zero(x.size());
}

PotentialSpec PotentialSpec::tristable() {
  PotentialSpec p;
  p.kind = PotentialKind::Tristable;
  p.well_coeff = 4.0;
  p.dim = 4;
  const double pi = 3.14159265358979323846;
  auto well = [](double r, double ang) {
    VectorXd w = VectorXd::Zero(4);
    w[0] = r * std::cos(ang);
    w[1] = r * std::sin(ang);
    return w;
  };
  p.wells = {well(0.95, pi / 6), well(1.05, 5 * pi / 6), well(1.0, -pi / 2)};
  return p;
}

PotentialSpec PotentialSpec::bistable() {
  PotentialSpec p;
  p.kind = PotentialKind::Bistable;
  p.well_coeff = 1.0;
  p.dim = 4;
  VectorXd w0 = VectorXd::Zero(4), w1 = VectorXd::Zero(4);
  w0[0] = w0[1] = 1.15;
  w1[0] = w1[1] = -1.0;
  p.wells = {w0, w1};
  return p;
}

PotentialSpec PotentialSpec::linear(VectorXd slope) {
  PotentialSpec p;
  p.kind = PotentialKind::Linear;
  p.dim = static_cast<int>(slope.size());
  p.linear_slope = std::move(slope);
  return p;
}

PotentialSpec PotentialSpec::quadratic(double c, int dim) {
  PotentialSpec p;
  p.kind = PotentialKind::Quadratic;
  p.quad_c = c;
  p.dim = dim;
  return p;
}

VectorXd potential_drift(const PotentialSpec& p, const VectorXd& x) {
  return -p.gradient(x);
}

void SimConfig::validate() const {
  if (!(dt_step > 0)) throw InvalidInput("SimConfig: dt_step must be positive");
  if (!(sigma2 >= 0)) throw InvalidInput("SimConfig: sigma2 must be nonnegative");
  if (dim < 1) throw InvalidInput("SimConfig: dim");
  if (init_center.size() != 0 && init_center.size() != dim)
    throw InvalidInput("SimConfig: init_center dimension");
}

ParticleSet initial_particles(const SimConfig& cfg, int count, std::uint64_t seed,
                              std::uint64_t run_id) {
  cfg.validate();
  ParticleSet ps;
  ps.x.resize(count, cfg.dim);
  ps.ids.resize(count);
  for (int i = 0; i < count; ++i) {
    CounterRng rng = particle_rng(seed, run_id, static_cast<std::uint64_t>(i), kBirthStep);
    for (int c = 0; c < cfg.dim; ++c) {
      const double center = cfg.init_center.size() ? cfg.init_center[c] : 0.0;
      ps.x(i, c) = center + cfg.init_scale * rng.normal();
    }
    ps.ids[i] = static_cast<std::uint64_t>(i);
  }
  ps.next_id = static_cast<std::uint64_t>(count);
  return ps;
}

ParticleSet em_branching_step(const ParticleSet& states, const SimConfig& cfg, double tau,
                              int step_index, std::uint64_t seed, std::uint64_t run_id) {
  const int count = static_cast<int>(states.x.rows());
  const int d = static_cast<int>(states.x.cols());
  const double sigma = std::sqrt(cfg.sigma2);
  const double sq_tau = std::sqrt(tau);

  ParticleSet out;
  out.next_id = states.next_id;
  out.x.resize(2 * count, d);  // division at most doubles the population
  out.ids.reserve(2 * static_cast<std::size_t>(count));
  int m = 0;

  VectorXd x(d), moved(d);
  for (int i = 0; i < count; ++i) {
    CounterRng rng = particle_rng(seed, run_id, states.ids[i],
                                  static_cast<std::uint64_t>(step_index));
    x = states.x.row(i).transpose();
    const VectorXd drift = potential_drift(cfg.potential, x);
    for (int c = 0; c < d; ++c)
      moved[c] = x[c] + tau * drift[c] + sigma * sq_tau * rng.normal();

    const double pb = cfg.birth(moved) * tau;
    const double pd = cfg.death(moved) * tau;
    if (pb + pd > 1.0)
      throw InvalidInput("em_branching_step: beta*tau + delta*tau exceeds 1; reduce dt_step");
    const double u = rng.uniform();
    if (u < pb) {
      out.x.row(m++) = moved.transpose();
      out.ids.push_back(states.ids[i]);
      out.x.row(m++) = moved.transpose();  // division: identical daughter
      out.ids.push_back(out.next_id++);
    } else if (u < pb + pd) {
      // annihilation
    } else {
      out.x.row(m++) = moved.transpose();
      out.ids.push_back(states.ids[i]);
    }
  }
  out.x.conservativeResize(m, d);
  return out;
}

namespace {

// advance to target time on the tau grid; returns updated global step index
int run_to(ParticleSet& ps, const SimConfig& cfg, double t_from, double t_to, int step_base,
           std::uint64_t seed, std::uint64_t run_id) {
  double t = t_from;
  int step = step_base;
  while (t < t_to - 1e-12) {
    const double tau = std::min(cfg.dt_step, t_to - t);
    ps = em_branching_step(ps, cfg, tau, step, seed, run_id);
    t += tau;
    ++step;
  }
  return step;
}

std::vector<int> time_ranks(const VectorXd& times) {
  std::vector<int> order(times.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    return times[a] < times[b] || (times[a] == times[b] && a < b);
  });
  std::vector<int> rank(times.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = static_cast<int>(r);
  return rank;
}

}  // namespace

SnapshotSeries sample_snapshots(const SimConfig& cfg, const VectorXd& times,
                                const std::vector<int>& counts, std::uint64_t seed) {
  cfg.validate();
  const int T = static_cast<int>(times.size());
  if (static_cast<int>(counts.size()) != T)
    throw InvalidInput("sample_snapshots: counts/times mismatch");
  const std::vector<int> rank = time_ranks(times);

  SnapshotSeries series;
  series.snapshots.resize(T);
  for (int i = 0; i < T; ++i) {
    const std::uint64_t run = static_cast<std::uint64_t>(rank[i]);
    const int want = counts[i];
    if (want < 1) throw InvalidInput("sample_snapshots: counts must be positive");
    ParticleSet ps = initial_particles(cfg, want, seed, run);
    run_to(ps, cfg, 0.0, times[i], 0, seed, run);

    Snapshot& snap = series.snapshots[i];
    snap.time = times[i];
    const int survivors = static_cast<int>(ps.x.rows());
    snap.points.resize(want, cfg.dim);
    CounterRng pick(seed, CounterRng::Purpose::Simulation, (run << 44) | kShuffleStream);
    if (survivors == 0) {
      snap.points.resize(0, cfg.dim);
      snap.undersampled = true;
    } else if (survivors < want) {
      for (int k = 0; k < want; ++k)
        snap.points.row(k) = ps.x.row(static_cast<int>(pick.uniform_index(survivors)));
      snap.undersampled = true;
    } else {
      // partial Fisher-Yates
      std::vector<int> idx(survivors);
      std::iota(idx.begin(), idx.end(), 0);
      for (int k = 0; k < want; ++k) {
        const int j = k + static_cast<int>(pick.uniform_index(survivors - k));
        std::swap(idx[k], idx[j]);
        snap.points.row(k) = ps.x.row(idx[k]);
      }
    }
  }
  return series;
}

std::vector<MatrixXd> ground_truth_clouds(const SimConfig& cfg, const VectorXd& times,
                                          int count, std::uint64_t seed) {
  cfg.validate();
  const int T = static_cast<int>(times.size());
  const std::vector<int> rank = time_ranks(times);
  std::vector<int> order(T);
  for (int i = 0; i < T; ++i) order[rank[i]] = i;

  const std::uint64_t run = 1ull << 19;
  ParticleSet ps = initial_particles(cfg, count, seed, run);
  std::vector<MatrixXd> clouds(T);
  double t = 0.0;
  int step = 0;
  for (int r = 0; r < T; ++r) {
    const int i = order[r];
    step = run_to(ps, cfg, t, times[i], step, seed, run);
    t = times[i];
    clouds[i] = ps.x;
  }
  return clouds;
}

MatrixXd ground_truth_paths(const SimConfig& cfg, const VectorXd& times, int count,
                            std::uint64_t seed) {
  cfg.validate();
  if (cfg.birth.kind != RateSpec::Kind::Zero || cfg.death.kind != RateSpec::Kind::Zero)
    throw InvalidInput("ground_truth_paths: requires zero birth/death rates");
  const int T = static_cast<int>(times.size());
  const std::vector<int> rank = time_ranks(times);
  std::vector<int> order(T);
  for (int i = 0; i < T; ++i) order[rank[i]] = i;

  const std::uint64_t run = (1ull << 19) + 1;
  ParticleSet ps = initial_particles(cfg, count, seed, run);
  MatrixXd flat(count, T * cfg.dim);
  double t = 0.0;
  int step = 0;
  for (int r = 0; r < T; ++r) {
    const int i = order[r];
    step = run_to(ps, cfg, t, times[i], step, seed, run);
    t = times[i];
    for (int p = 0; p < count; ++p) flat.block(p, i * cfg.dim, 1, cfg.dim) = ps.x.row(p);
  }
  return flat;
}

}  // namespace pathlaw
