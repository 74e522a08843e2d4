// Batch front-end: JSON-configured sub-commands over the pathlaw library.
// Exit codes: 0 success, 2 config/schema error, 3 solver non-convergence
// (outputs still written, flagged in the manifest).

#include "pathlaw/augment.hpp"
#include "pathlaw/baselines.hpp"
#include "pathlaw/branching.hpp"
#include "pathlaw/evaluate.hpp"
#include "pathlaw/io.hpp"
#include "pathlaw/markov.hpp"
#include "pathlaw/simulate.hpp"
#include "pathlaw/solver.hpp"

#include "CLI11.hpp"

#include <atomic>
#include <cstdio>
#include <optional>
#include <sstream>
#include <thread>

using namespace pathlaw;
using io::json;

namespace {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require_keys(const json& j, const std::string& where,
                  const std::vector<std::string>& required,
                  const std::vector<std::string>& optional) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& k : required)
    if (!j.contains(k)) throw ConfigError(where + ": missing required key '" + k + "'");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    bool known = false;
    for (const auto& k : required) known = known || k == key;
    for (const auto& k : optional) known = known || k == key;
    if (!known) throw ConfigError(where + ": unknown key '" + key + "' rejected");
  }
}

VectorXd parse_vector(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array of numbers");
  VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<int>(i)] = j[i].get<double>();
  return v;
}

VectorXd parse_times(const json& j, const std::string& where) {
  if (j.is_array()) return parse_vector(j, where);
  require_keys(j, where, {"start", "stop", "count"}, {});
  const int count = j["count"].get<int>();
  if (count < 1) throw ConfigError(where + ": count must be positive");
  VectorXd t(count);
  const double a = j["start"].get<double>(), b = j["stop"].get<double>();
  for (int i = 0; i < count; ++i) t[i] = count == 1 ? a : a + (b - a) * i / (count - 1);
  return t;
}

RateSpec parse_rate(const json& j, const std::string& where) {
  require_keys(j, where, {"kind"}, {"amplitude", "gain", "axis"});
  const std::string kind = j["kind"].get<std::string>();
  if (kind == "zero") return RateSpec::zero();
  if (kind == "constant") return RateSpec::constant(j.value("amplitude", 0.0));
  if (kind == "tanh_gate")
    return RateSpec::tanh_gate(j.value("amplitude", 0.0), j.value("gain", 2.0),
                               j.value("axis", 0));
  throw ConfigError(where + ": unknown rate kind '" + kind + "'");
}

PotentialSpec parse_potential(const json& j, int dim, const std::string& where) {
  require_keys(j, where, {"kind"}, {"slope", "quad_c"});
  const std::string kind = j["kind"].get<std::string>();
  if (kind == "tristable") return PotentialSpec::tristable();
  if (kind == "bistable") return PotentialSpec::bistable();
  if (kind == "linear") {
    if (!j.contains("slope")) throw ConfigError(where + ": linear potential needs 'slope'");
    return PotentialSpec::linear(parse_vector(j["slope"], where + ".slope"));
  }
  if (kind == "quadratic") return PotentialSpec::quadratic(j.value("quad_c", 1.0), dim);
  throw ConfigError(where + ": unknown potential kind '" + kind + "'");
}

SimConfig parse_sim(const json& j) {
  require_keys(j, "simulate", {"potential", "sigma2", "dim", "times", "counts", "output"},
               {"dt_step", "init_scale", "init_center", "birth", "death", "seed",
                "ground_truth", "gap_tol", "max_iter"});
  SimConfig cfg;
  cfg.dim = j["dim"].get<int>();
  cfg.potential = parse_potential(j["potential"], cfg.dim, "simulate.potential");
  cfg.sigma2 = j["sigma2"].get<double>();
  cfg.dt_step = j.value("dt_step", 4e-4);
  cfg.init_scale = j.value("init_scale", 0.15);
  if (j.contains("init_center"))
    cfg.init_center = parse_vector(j["init_center"], "simulate.init_center");
  if (j.contains("birth")) cfg.birth = parse_rate(j["birth"], "simulate.birth");
  if (j.contains("death")) cfg.death = parse_rate(j["death"], "simulate.death");
  cfg.validate();
  return cfg;
}

std::vector<int> parse_counts(const json& j, int T) {
  std::vector<int> counts;
  if (j.is_number_integer()) {
    counts.assign(T, j.get<int>());
  } else if (j.is_array()) {
    for (const auto& c : j) counts.push_back(c.get<int>());
    if (static_cast<int>(counts.size()) != T)
      throw ConfigError("counts: length must match times");
  } else {
    throw ConfigError("counts: expected an integer or an array");
  }
  return counts;
}

json load_config(const std::string& path) {
  try {
    return json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
}

// ------------------------------------------------------------------

int cmd_simulate(json cfg) {
  SimConfig sim = parse_sim(cfg);
  VectorXd times = parse_times(cfg["times"], "simulate.times");
  std::vector<int> counts = parse_counts(cfg["counts"], static_cast<int>(times.size()));
  const std::uint64_t seed = cfg.value("seed", 0);
  const std::string output = cfg["output"].get<std::string>();

  SnapshotSeries series = sample_snapshots(sim, times, counts, seed);
  io::write_atomic(output, io::snapshot_csv(series));
  std::vector<std::string> outputs{output};

  if (cfg.contains("ground_truth")) {
    const json& gt = cfg["ground_truth"];
    require_keys(gt, "simulate.ground_truth", {},
                 {"particles", "clouds_output", "paths", "paths_output"});
    if (gt.contains("clouds_output")) {
      const int particles = gt.value("particles", 5000);
      std::vector<MatrixXd> clouds = ground_truth_clouds(sim, times, particles, seed);
      SnapshotSeries gt_series;
      gt_series.snapshots.resize(clouds.size());
      for (std::size_t i = 0; i < clouds.size(); ++i) {
        gt_series.snapshots[i].time = times[static_cast<int>(i)];
        gt_series.snapshots[i].points = clouds[i];
      }
      const std::string path = gt["clouds_output"].get<std::string>();
      io::write_atomic(path, io::snapshot_csv(gt_series));
      outputs.push_back(path);
    }
    if (gt.contains("paths_output")) {
      MatrixXd flat = ground_truth_paths(sim, times, gt.value("paths", 1000), seed);
      const std::string path = gt["paths_output"].get<std::string>();
      io::write_atomic(path, io::paths_csv(flat, times, sim.dim));
      outputs.push_back(path);
    }
  }
  io::write_atomic(output + ".manifest.json",
                   io::make_manifest("simulate", cfg, outputs).dump(2) + "\n");
  return 0;
}

struct LoadedSeries {
  SnapshotSeries series;
  Support support;
  MatrixXd data;
  VectorXd times;
};

LoadedSeries load_series(const std::string& path, const std::optional<std::string>& extra) {
  LoadedSeries out;
  out.series = io::parse_snapshot_csv(io::read_file(path));
  std::vector<VectorXd> extra_pts;
  if (extra) {
    MatrixXd pts = io::parse_points_csv(io::read_file(*extra));
    for (int r = 0; r < pts.rows(); ++r) extra_pts.push_back(pts.row(r).transpose());
  }
  out.support = build_support(out.series, extra_pts);
  out.data = empirical_weights(out.series, out.support);
  out.times.resize(out.series.num_times());
  for (int i = 0; i < out.series.num_times(); ++i)
    out.times[i] = out.series.snapshots[i].time;
  return out;
}

MatrixXd growth_from_config(const json& g, const Support& support, const VectorXd& times) {
  VectorXd dts(times.size() - 1);
  for (int i = 0; i + 1 < times.size(); ++i) dts[i] = times[i + 1] - times[i];
  if (g.contains("csv")) {
    require_keys(g, "fit.growth", {"csv"}, {});
    const auto text = io::read_file(g["csv"].get<std::string>());
    std::istringstream ss(text);
    std::string line;
    std::getline(ss, line);
    if (line != "point_index,birth,death")
      throw ConfigError("growth csv: expected header point_index,birth,death");
    VectorXd birth = VectorXd::Zero(support.size());
    VectorXd death = VectorXd::Zero(support.size());
    while (std::getline(ss, line)) {
      if (line.empty()) continue;
      int idx;
      double b, d;
      if (std::sscanf(line.c_str(), "%d,%lf,%lf", &idx, &b, &d) != 3)
        throw ConfigError("growth csv: bad row '" + line + "'");
      if (idx < 0 || idx >= support.size())
        throw ConfigError("growth csv: index out of range");
      birth[idx] = b;
      death[idx] = d;
    }
    MatrixXd out(dts.size(), support.size());
    for (int i = 0; i < dts.size(); ++i)
      out.row(i) = (dts[i] * (birth - death).array()).exp().transpose();
    return out;
  }
  require_keys(g, "fit.growth", {"birth"}, {"death"});
  RateSpec birth = parse_rate(g["birth"], "fit.growth.birth");
  RateSpec death =
      g.contains("death") ? parse_rate(g["death"], "fit.growth.death") : RateSpec::zero();
  GrowthSpec gs;
  gs.beta_est = [birth](const VectorXd& x) { return birth(x); };
  gs.delta_est = [death](const VectorXd& x) { return death(x); };
  return growth_factors(gs, support, dts);
}

ProblemSpec spec_from_config(const json& cfg, const LoadedSeries& in) {
  ProblemSpec spec = ProblemSpec::build(
      in.support, in.times, in.data, cfg["sigma2"].get<double>(),
      cfg["lambda"].get<double>(), cfg.value("eps_df", 0.025), cfg.value("lambda_df", 1.0));
  const std::string weights = cfg.value("weights", "proportional");
  if (weights == "proportional") {
    double total = 0.0;
    for (const auto& s : in.series.snapshots) total += s.points.rows();
    for (int i = 0; i < spec.num_times(); ++i)
      spec.weights[i] = in.series.snapshots[i].points.rows() / total;
  } else if (weights != "uniform") {
    throw ConfigError("fit.weights: expected 'uniform' or 'proportional'");
  }
  if (cfg.contains("kappa") && !cfg["kappa"].is_null())
    spec.kappa.setConstant(cfg["kappa"].get<double>());
  if (cfg.contains("growth"))
    spec.growth = growth_from_config(cfg["growth"], in.support, in.times);
  if (cfg.contains("normalize_costs") && cfg["normalize_costs"].get<bool>()) {
    // per-pair normalization of transport costs and matching data-fit scales
    for (int g = 0; g + 1 < spec.num_times(); ++g) {
      const double denom = mean_squared_distance(in.series.snapshots[g].points,
                                                 in.series.snapshots[g + 1].points);
      if (!(denom > 0)) throw ConfigError("normalize_costs: degenerate snapshot pair");
      spec.reg_cost_scale[g] = 1.0 / denom;
      spec.df_cost_scale[g] = 1.0 / denom;
    }
    spec.df_cost_scale[spec.num_times() - 1] = spec.reg_cost_scale[spec.num_times() - 2];
  }
  return spec;
}

json solve_and_write(ProblemSpec& spec, const json& cfg, const std::string& prefix,
                     std::vector<std::string>& outputs, SolveResult& res) {
  SolverOptions opt;
  opt.gap_tol = cfg.value("gap_tol", 1e-5);
  opt.max_iter = cfg.value("max_iter", 4000);
  opt.history = cfg.value("history", 10);
  opt.threads = cfg.value("threads", 1);
  res = solve(spec, opt);

  const Reconstruction& rec = res.reconstruction;
  io::write_atomic(prefix + "_points.csv", io::points_csv(spec.support.points));
  io::write_atomic(prefix + "_marginals.csv", io::marginals_csv(rec.marginals));
  std::vector<VectorXd> normalized = rec.marginals;
  for (auto& m : normalized) m /= m.sum();
  io::write_atomic(prefix + "_marginals_normalized.csv", io::marginals_csv(normalized));
  io::write_atomic(prefix + "_couplings.csv", io::couplings_csv(rec));
  json model = io::reconstruction_json(rec);
  io::write_atomic(prefix + "_model.json", model.dump() + "\n");
  for (const char* suffix : {"_points.csv", "_marginals.csv", "_marginals_normalized.csv",
                             "_couplings.csv", "_model.json"})
    outputs.push_back(prefix + suffix);

  json diag;
  diag["gap"] = res.gap;
  diag["dual_value"] = res.dual_value;
  diag["primal_value"] = res.primal_value;
  diag["iterations"] = res.iterations;
  diag["converged"] = res.converged;
  return diag;
}

int cmd_fit(json cfg) {
  require_keys(cfg, "fit", {"input", "sigma2", "lambda", "output_prefix"},
               {"eps_df", "lambda_df", "weights", "kappa", "growth", "masses",
                "normalize_costs", "extra_points", "seed", "gap_tol", "max_iter",
                "history", "threads"});
  std::optional<std::string> extra;
  if (cfg.contains("extra_points")) extra = cfg["extra_points"].get<std::string>();
  LoadedSeries in = load_series(cfg["input"].get<std::string>(), extra);
  ProblemSpec spec = spec_from_config(cfg, in);

  if (cfg.contains("masses")) {
    const json& m = cfg["masses"];
    if (m.is_array()) {
      spec.masses = parse_vector(m, "fit.masses");
    } else if (m.is_string() && m.get<std::string>() == "estimate") {
      if (!cfg.contains("growth"))
        throw ConfigError("fit.masses: 'estimate' requires a growth section");
      MatrixXd g = spec.growth;
      ProblemSpec pass1 = spec;
      SolverOptions opt;
      opt.gap_tol = cfg.value("gap_tol", 1e-5);
      opt.max_iter = cfg.value("max_iter", 4000);
      pass1.growth.setOnes();
      pass1.kappa.setConstant(10.0);
      SolveResult first = solve(pass1, opt);
      spec.masses[0] = 1.0;
      for (int i = 0; i + 1 < spec.num_times(); ++i) {
        const VectorXd& r = first.reconstruction.marginals[i];
        spec.masses[i + 1] =
            spec.masses[i] * (g.row(i).transpose().array() * r.array()).sum() / r.sum();
      }
    } else if (!(m.is_string() && m.get<std::string>() == "ones")) {
      throw ConfigError("fit.masses: expected 'ones', 'estimate' or an array");
    }
  }

  const std::string prefix = cfg["output_prefix"].get<std::string>();
  std::vector<std::string> outputs;
  SolveResult res;
  json diag = solve_and_write(spec, cfg, prefix, outputs, res);
  json manifest = io::make_manifest("fit", cfg, outputs);
  manifest["solver"] = diag;
  io::write_atomic(prefix + ".manifest.json", manifest.dump(2) + "\n");
  return res.converged ? 0 : 3;
}

int cmd_baseline(json cfg) {
  require_keys(cfg, "baseline", {"input", "method", "output_prefix"},
               {"sigma2", "bandwidth", "extra_points", "seed", "gap_tol", "max_iter"});
  std::optional<std::string> extra;
  if (cfg.contains("extra_points")) extra = cfg["extra_points"].get<std::string>();
  LoadedSeries in = load_series(cfg["input"].get<std::string>(), extra);
  const std::string method = cfg["method"].get<std::string>();
  const std::string prefix = cfg["output_prefix"].get<std::string>();
  std::vector<std::string> outputs;

  if (method == "gluing") {
    if (!cfg.contains("sigma2")) throw ConfigError("baseline: gluing needs sigma2");
    Reconstruction rec =
        gluing_reconstruction(in.series, in.support, cfg["sigma2"].get<double>());
    io::write_atomic(prefix + "_points.csv", io::points_csv(in.support.points));
    io::write_atomic(prefix + "_marginals.csv", io::marginals_csv(rec.marginals));
    io::write_atomic(prefix + "_couplings.csv", io::couplings_csv(rec));
    io::write_atomic(prefix + "_model.json", io::reconstruction_json(rec).dump() + "\n");
    for (const char* s : {"_points.csv", "_marginals.csv", "_couplings.csv", "_model.json"})
      outputs.push_back(prefix + s);
  } else if (method == "kernel") {
    if (!cfg.contains("bandwidth")) throw ConfigError("baseline: kernel needs bandwidth");
    MatrixXd smooth = kernel_smooth(in.data, in.times, cfg["bandwidth"].get<double>());
    std::vector<VectorXd> margs;
    for (int i = 0; i < smooth.rows(); ++i) margs.push_back(smooth.row(i).transpose());
    io::write_atomic(prefix + "_points.csv", io::points_csv(in.support.points));
    io::write_atomic(prefix + "_marginals.csv", io::marginals_csv(margs));
    for (const char* s : {"_points.csv", "_marginals.csv"}) outputs.push_back(prefix + s);
  } else {
    throw ConfigError("baseline.method: expected 'gluing' or 'kernel'");
  }
  json manifest = io::make_manifest("baseline", cfg, outputs);
  manifest["method"] = method;
  io::write_atomic(prefix + ".manifest.json", manifest.dump(2) + "\n");
  return 0;
}

Reconstruction load_model(const json& cfg) {
  Support support = support_from_matrix(
      io::parse_points_csv(io::read_file(cfg["points"].get<std::string>())));
  json model = json::parse(io::read_file(cfg["model"].get<std::string>()));
  return io::parse_reconstruction_json(model, support);
}

int cmd_sample_paths(json cfg) {
  require_keys(cfg, "sample-paths", {"model", "points", "paths", "output"},
               {"seed", "gap_tol", "max_iter"});
  Reconstruction rec = load_model(cfg);
  MarkovPathLaw law = compose_markov(rec);
  PathEnsemble ens = sample_paths(law, cfg["paths"].get<int>(), cfg.value("seed", 0));
  Support support = support_from_matrix(
      io::parse_points_csv(io::read_file(cfg["points"].get<std::string>())));
  const std::string output = cfg["output"].get<std::string>();
  io::write_atomic(output, io::paths_csv(ens, support));
  io::write_atomic(output + ".manifest.json",
                   io::make_manifest("sample-paths", cfg, {output}).dump(2) + "\n");
  return 0;
}

int cmd_drift(json cfg) {
  require_keys(cfg, "drift", {"model", "points", "output"},
               {"average_over_time", "mass_weighted", "seed", "gap_tol", "max_iter"});
  Reconstruction rec = load_model(cfg);
  DriftField field = estimate_drift(rec, cfg.value("average_over_time", true),
                                    cfg.value("mass_weighted", false));
  std::string out = "point_index,defined";
  for (int c = 0; c < field.velocity.cols(); ++c) out += ",v_" + std::to_string(c);
  out += "\n";
  char buf[64];
  for (int j = 0; j < field.velocity.rows(); ++j) {
    out += std::to_string(j);
    out += field.defined[j] ? ",1" : ",0";
    for (int c = 0; c < field.velocity.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), ",%.17g", field.velocity(j, c));
      out += buf;
    }
    out += "\n";
  }
  const std::string output = cfg["output"].get<std::string>();
  io::write_atomic(output, out);
  io::write_atomic(output + ".manifest.json",
                   io::make_manifest("drift", cfg, {output}).dump(2) + "\n");
  return 0;
}

int cmd_evaluate(json cfg) {
  require_keys(cfg, "evaluate", {"output"},
               {"points", "marginals", "reference_clouds", "paths_a", "paths_b", "seed",
                "gap_tol", "max_iter"});
  json report;
  if (cfg.contains("marginals")) {
    if (!cfg.contains("points") || !cfg.contains("reference_clouds"))
      throw ConfigError("evaluate: marginals need 'points' and 'reference_clouds'");
    MatrixXd pts = io::parse_points_csv(io::read_file(cfg["points"].get<std::string>()));
    SnapshotSeries ref =
        io::parse_snapshot_csv(io::read_file(cfg["reference_clouds"].get<std::string>()));
    std::vector<VectorXd> margs = io::parse_marginals_csv(
        io::read_file(cfg["marginals"].get<std::string>()), static_cast<int>(pts.rows()));
    if (margs.size() != static_cast<std::size_t>(ref.num_times()))
      throw ConfigError("evaluate: marginal/reference time counts differ");
    json per_time = json::array();
    double mean = 0.0;
    for (std::size_t i = 0; i < margs.size(); ++i) {
      VectorXd w = margs[i];
      w = (w.array() < 1e-14).select(0.0, w);
      w /= w.sum();
      const MatrixXd& cloud = ref.snapshots[i].points;
      VectorXd u = VectorXd::Constant(cloud.rows(), 1.0 / cloud.rows());
      const double d = w2_exact(w, pts, u, cloud);
      per_time.push_back(d);
      mean += d / margs.size();
    }
    report["marginal_w2"] = per_time;
    report["mean_marginal_w2"] = mean;
  }
  if (cfg.contains("paths_a") != cfg.contains("paths_b"))
    throw ConfigError("evaluate: need both paths_a and paths_b");
  if (cfg.contains("paths_a")) {
    VectorXd ta, tb;
    int da = 0, db = 0;
    MatrixXd a =
        io::parse_paths_csv(io::read_file(cfg["paths_a"].get<std::string>()), &ta, &da);
    MatrixXd b =
        io::parse_paths_csv(io::read_file(cfg["paths_b"].get<std::string>()), &tb, &db);
    if (da != db || ta.size() != tb.size())
      throw ConfigError("evaluate: path files have mismatched shapes");
    report["path_w2"] = w2_paths_empirical(a, b, static_cast<int>(ta.size()));
  }
  const std::string output = cfg["output"].get<std::string>();
  io::write_atomic(output, report.dump(2) + "\n");
  io::write_atomic(output + ".manifest.json",
                   io::make_manifest("evaluate", cfg, {output}).dump(2) + "\n");
  return 0;
}

int cmd_augment(json cfg) {
  require_keys(cfg, "augment", {"model", "points", "s2", "k", "output"},
               {"pairs", "seed", "literal_covariance", "gap_tol", "max_iter"});
  Reconstruction rec = load_model(cfg);
  MatrixXd pts = io::parse_points_csv(io::read_file(cfg["points"].get<std::string>()));
  Support support = support_from_matrix(pts);
  AugmentOptions opt;
  opt.s2 = cfg["s2"].get<double>();
  opt.k = cfg["k"].get<int>();
  opt.seed = cfg.value("seed", 0);
  opt.literal_covariance = cfg.value("literal_covariance", true);

  std::vector<std::pair<int, int>> pairs;
  const int T = static_cast<int>(rec.times.size());
  if (cfg.contains("pairs") && cfg["pairs"].is_array()) {
    for (const auto& p : cfg["pairs"]) pairs.emplace_back(p[0].get<int>(), p[1].get<int>());
  } else {
    for (int i = 0; i + 2 < T; ++i) pairs.emplace_back(i, i + 2);
  }

  std::vector<MatrixXd> added;
  long total = 0;
  for (const auto& [i, j] : pairs) {
    added.push_back(augment_support(rec, support, i, j, opt));
    total += added.back().rows();
  }
  MatrixXd all(pts.rows() + total, pts.cols());
  all.topRows(pts.rows()) = pts;
  std::vector<char> synthetic(all.rows(), 0);
  long at = pts.rows();
  for (const auto& m : added) {
    all.middleRows(at, m.rows()) = m;
    for (int r = 0; r < m.rows(); ++r) synthetic[at + r] = 1;
    at += m.rows();
  }
  const std::string output = cfg["output"].get<std::string>();
  io::write_atomic(output, io::points_csv(all, synthetic));
  io::write_atomic(output + ".manifest.json",
                   io::make_manifest("augment", cfg, {output}).dump(2) + "\n");
  return 0;
}

int cmd_sweep(json cfg, int jobs) {
  require_keys(cfg, "sweep",
               {"input", "sigma2", "lambda_grid", "reference_clouds", "output_prefix"},
               {"eps_df", "lambda_df", "weights", "kappa", "growth", "normalize_costs",
                "extra_points", "seed", "gap_tol", "max_iter", "history", "threads"});
  std::optional<std::string> extra;
  if (cfg.contains("extra_points")) extra = cfg["extra_points"].get<std::string>();
  LoadedSeries in = load_series(cfg["input"].get<std::string>(), extra);
  SnapshotSeries ref =
      io::parse_snapshot_csv(io::read_file(cfg["reference_clouds"].get<std::string>()));

  VectorXd grid;
  const json& g = cfg["lambda_grid"];
  if (g.is_array()) {
    grid = parse_vector(g, "sweep.lambda_grid");
  } else {
    require_keys(g, "sweep.lambda_grid", {"start", "stop", "count"}, {});
    const int count = g["count"].get<int>();
    grid.resize(count);
    for (int i = 0; i < count; ++i)
      grid[i] = std::pow(10.0, g["start"].get<double>() +
                                   (g["stop"].get<double>() - g["start"].get<double>()) *
                                       (count == 1 ? 0.0 : double(i) / (count - 1)));
  }

  const std::string prefix = cfg["output_prefix"].get<std::string>();
  std::vector<double> errors(grid.size()), gaps(grid.size());
  std::vector<int> flags(grid.size());

  std::vector<json> sub(grid.size());
  for (int k = 0; k < grid.size(); ++k) {
    json fit_cfg = cfg;
    fit_cfg.erase("lambda_grid");
    fit_cfg.erase("reference_clouds");
    fit_cfg.erase("output_prefix");
    fit_cfg["lambda"] = grid[k];
    sub[k] = fit_cfg;
  }
  std::atomic<int> next{0};
  auto worker = [&]() {
    while (true) {
      const int k = next.fetch_add(1);
      if (k >= grid.size()) return;
      ProblemSpec spec = spec_from_config(sub[k], in);
      SolverOptions opt;
      opt.gap_tol = sub[k].value("gap_tol", 1e-5);
      opt.max_iter = sub[k].value("max_iter", 4000);
      opt.history = sub[k].value("history", 10);
      SolveResult res = solve(spec, opt);
      gaps[k] = res.gap;
      flags[k] = res.converged;
      double mean = 0.0;
      for (int i = 0; i < in.times.size(); ++i) {
        VectorXd w = res.reconstruction.marginals[i];
        w = (w.array() < 1e-14).select(0.0, w);
        w /= w.sum();
        const MatrixXd& cloud = ref.snapshots[i].points;
        VectorXd u = VectorXd::Constant(cloud.rows(), 1.0 / cloud.rows());
        mean += w2_exact(w, in.support.points, u, cloud) / in.times.size();
      }
      errors[k] = mean;
    }
  };
  {
    std::vector<std::thread> pool;
    for (int w = 1; w < jobs; ++w) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
  }

  std::string csv = "lambda,mean_marginal_w2,gap,converged\n";
  char buf[128];
  bool all_converged = true;
  for (int k = 0; k < grid.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%d\n", grid[k], errors[k], gaps[k],
                  flags[k]);
    csv += buf;
    all_converged = all_converged && flags[k];
  }
  io::write_atomic(prefix + "_sweep.csv", csv);
  io::write_atomic(prefix + ".manifest.json",
                   io::make_manifest("sweep", cfg, {prefix + "_sweep.csv"}).dump(2) + "\n");
  return all_converged ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"law-on-paths reconstruction from snapshot series"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed_flag;
  int jobs = 1;
  std::optional<double> gap_tol_flag;
  std::optional<int> max_iter_flag;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON configuration file")->required();
    sub->add_option("--seed", seed_flag, "override the config seed");
    sub->add_option("--jobs", jobs, "parallel workers for sweeps");
    sub->add_option("--gap-tol", gap_tol_flag, "duality-gap tolerance override");
    sub->add_option("--max-iter", max_iter_flag, "iteration cap override");
  };

  for (const char* n : {"simulate", "fit", "baseline", "sample-paths", "drift", "evaluate",
                        "augment", "sweep"})
    add_common(app.add_subcommand(n));

  CLI11_PARSE(app, argc, argv);
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    json cfg = load_config(config_path);
    if (seed_flag) cfg["seed"] = *seed_flag;
    if (gap_tol_flag) cfg["gap_tol"] = *gap_tol_flag;
    if (max_iter_flag) cfg["max_iter"] = *max_iter_flag;

    if (command == "simulate") return cmd_simulate(cfg);
    if (command == "fit") return cmd_fit(cfg);
    if (command == "baseline") return cmd_baseline(cfg);
    if (command == "sample-paths") return cmd_sample_paths(cfg);
    if (command == "drift") return cmd_drift(cfg);
    if (command == "evaluate") return cmd_evaluate(cfg);
    if (command == "augment") return cmd_augment(cfg);
    if (command == "sweep") return cmd_sweep(cfg, jobs);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const SinkhornFailure& e) {
    std::fprintf(stderr, "solver error: %s (last violation %.3e)\n", e.what(),
                 e.last_violation);
    return 3;
  } catch (const InvalidInput& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
