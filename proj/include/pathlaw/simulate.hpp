#pragma once

#include "pathlaw/geometry.hpp"
#include "pathlaw/rng.hpp"

#include <cstdint>
#include <functional>

namespace pathlaw {

enum class PotentialKind { Tristable, Bistable, Linear, Quadratic, Custom };

// Potential landscapes driving the simulated processes. The named kinds have
// analytic gradients; Custom supplies closures.
struct PotentialSpec {
  PotentialKind kind = PotentialKind::Quadratic;
  std::vector<VectorXd> wells;  // tristable (3) / bistable (2)
  double well_coeff = 1.0;      // leading coefficient for the product forms
  VectorXd linear_slope;        // Psi = <slope, x>
  double quad_c = 1.0;          // Psi = (c/2) ||x||^2
  std::function<double(const VectorXd&)> custom_value;
  std::function<VectorXd(const VectorXd&)> custom_grad;

  double value(const VectorXd& x) const;
  VectorXd gradient(const VectorXd& x) const;

  static PotentialSpec tristable();          // 4-d, coeff 4, wells on the unit-ish circle
  static PotentialSpec bistable();           // 4-d product of two wells
  static PotentialSpec linear(VectorXd slope);
  static PotentialSpec quadratic(double c, int dim);

  int dim = 4;
};

// drift = -grad Psi
VectorXd potential_drift(const PotentialSpec& p, const VectorXd& x);

// Spatially dependent birth/death rates, serializable by kind.
struct RateSpec {
  enum class Kind { Zero, Constant, TanhGate };
  Kind kind = Kind::Zero;
  double amplitude = 0.0;  // Constant: rate; TanhGate: amplitude * (tanh(gain*x[axis]) + 1)/2
  double gain = 2.0;
  int axis = 0;

  double operator()(const VectorXd& x) const {
    switch (kind) {
      case Kind::Zero: return 0.0;
      case Kind::Constant: return amplitude;
      case Kind::TanhGate:
        return amplitude * 0.5 * (std::tanh(gain * x[axis]) + 1.0);
    }
    return 0.0;
  }
  static RateSpec zero() { return {}; }
  static RateSpec constant(double a) { return {Kind::Constant, a, 0.0, 0}; }
  static RateSpec tanh_gate(double a, double gain = 2.0, int axis = 0) {
    return {Kind::TanhGate, a, gain, axis};
  }
};

struct SimConfig {
  PotentialSpec potential;
  double sigma2 = 0.25;
  double dt_step = 4e-4;          // Euler-Maruyama step tau
  double t_max = 1.0;
  double init_scale = 0.15;       // initial law: init_scale * N(init_center, I_d)
  VectorXd init_center;           // defaults to the origin
  RateSpec birth, death;
  int dim = 4;

  void validate() const;
};

struct ParticleSet {
  MatrixXd x;                     // count x d
  std::vector<std::uint64_t> ids;
  std::uint64_t next_id = 0;
};

ParticleSet initial_particles(const SimConfig& cfg, int count, std::uint64_t seed,
                              std::uint64_t run_id);

// One Euler-Maruyama step with first-order branching: displacement first,
// then division with probability beta*tau or removal with probability
// delta*tau (exclusive draws). Deterministic under (seed, run_id, step).
ParticleSet em_branching_step(const ParticleSet& states, const SimConfig& cfg, double tau,
                              int step_index, std::uint64_t seed, std::uint64_t run_id);

// Independent realization per time-point; N_i survivors sampled without
// replacement (with replacement and a flag when the population is short).
SnapshotSeries sample_snapshots(const SimConfig& cfg, const VectorXd& times,
                                const std::vector<int>& counts, std::uint64_t seed);

// One realization of `count` particles recorded at each time (growth on).
std::vector<MatrixXd> ground_truth_clouds(const SimConfig& cfg, const VectorXd& times,
                                          int count, std::uint64_t seed);

// Path ensemble from one no-branching realization, flattened rows
// [x(t_1),...,x(t_T)]. Requires zero birth/death rates.
MatrixXd ground_truth_paths(const SimConfig& cfg, const VectorXd& times, int count,
                            std::uint64_t seed);

}  // namespace pathlaw
