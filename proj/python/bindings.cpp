#include "pathlaw/augment.hpp"
#include "pathlaw/baselines.hpp"
#include "pathlaw/branching.hpp"
#include "pathlaw/evaluate.hpp"
#include "pathlaw/markov.hpp"
#include "pathlaw/simulate.hpp"
#include "pathlaw/solver.hpp"

#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace pathlaw;

namespace {

SnapshotSeries series_from_lists(const std::vector<MatrixXd>& clouds,
                                 const std::vector<double>& times) {
  if (clouds.size() != times.size())
    throw InvalidInput("snapshot_series: clouds/times length mismatch");
  SnapshotSeries s;
  s.snapshots.resize(clouds.size());
  for (std::size_t i = 0; i < clouds.size(); ++i) {
    s.snapshots[i].time = times[i];
    s.snapshots[i].points = clouds[i];
  }
  return s;
}

}  // namespace

PYBIND11_MODULE(_pathlaw, m) {
  m.doc() = "law-on-paths reconstruction from snapshot series";

  py::register_exception<InvalidInput>(m, "InvalidInput");
  py::register_exception<SinkhornFailure>(m, "SinkhornFailure");

  py::class_<Support>(m, "Support")
      .def(py::init([](const MatrixXd& pts) { return support_from_matrix(pts); }))
      .def_property_readonly("points", [](const Support& s) { return s.points; })
      .def("__len__", &Support::size);

  py::class_<SnapshotSeries>(m, "SnapshotSeries")
      .def(py::init(&series_from_lists), py::arg("clouds"), py::arg("times"))
      .def_property_readonly("times",
                             [](const SnapshotSeries& s) {
                               std::vector<double> t;
                               for (const auto& snap : s.snapshots) t.push_back(snap.time);
                               return t;
                             })
      .def("cloud", [](const SnapshotSeries& s, int i) { return s.snapshots.at(i).points; });

  m.def("build_support", &build_support, py::arg("series"),
        py::arg("extra") = std::vector<VectorXd>{});
  m.def("empirical_weights", &empirical_weights, py::arg("series"), py::arg("support"));

  py::class_<GibbsKernel>(m, "GibbsKernel")
      .def_readonly("entries", &GibbsKernel::entries)
      .def_readonly("epsilon", &GibbsKernel::epsilon)
      .def_readonly("row_normalized", &GibbsKernel::row_normalized);
  m.def(
      "gibbs_kernel",
      [](const Support& s, double eps, bool row_normalize) {
        return gibbs_kernel(s, eps, std::nullopt, row_normalize);
      },
      py::arg("support"), py::arg("epsilon"), py::arg("row_normalize") = false);

  m.def(
      "sinkhorn",
      [](const VectorXd& a, const VectorXd& b, const GibbsKernel& k, double tol, int max_iter,
         bool annealing) {
        SinkhornResult r = sinkhorn(Measure::positive(a), Measure::positive(b), k,
                                    {tol, max_iter, annealing});
        return py::make_tuple(r.coupling.entries, r.potentials.u, r.potentials.v, r.violation);
      },
      py::arg("alpha"), py::arg("beta"), py::arg("kernel"), py::arg("tol") = 1e-9,
      py::arg("max_iter") = 10000, py::arg("annealing") = false);
  m.def(
      "ot_eps_value",
      [](const VectorXd& a, const VectorXd& b, const GibbsKernel& k) {
        return ot_eps_value(Measure::positive(a), Measure::positive(b), k);
      },
      py::arg("alpha"), py::arg("beta"), py::arg("kernel"));
  m.def(
      "kl_generalized",
      [](const VectorXd& a, const VectorXd& b) {
        return kl_generalized(Measure::positive(a), Measure::positive(b));
      },
      py::arg("alpha"), py::arg("beta"));

  py::class_<ProblemSpec>(m, "ProblemSpec")
      .def_readwrite("sigma2", &ProblemSpec::sigma2)
      .def_readwrite("lambda_reg", &ProblemSpec::lambda)
      .def_readwrite("eps_df", &ProblemSpec::eps_df)
      .def_readwrite("weights", &ProblemSpec::weights)
      .def_readwrite("lambda_df", &ProblemSpec::lambda_df)
      .def_readwrite("masses", &ProblemSpec::masses)
      .def_readwrite("growth", &ProblemSpec::growth)
      .def_readwrite("kappa", &ProblemSpec::kappa)
      .def_readwrite("pi0", &ProblemSpec::pi0)
      .def("validate", &ProblemSpec::validate);
  m.def(
      "make_spec",
      [](const Support& sup, const VectorXd& times, const MatrixXd& data, double sigma2,
         double lambda, double eps_df, double lambda_df) {
        return ProblemSpec::build(sup, times, data, sigma2, lambda, eps_df, lambda_df);
      },
      py::arg("support"), py::arg("times"), py::arg("data"), py::arg("sigma2"),
      py::arg("lambda_reg"), py::arg("eps_df") = 0.025, py::arg("lambda_df") = 1.0);

  py::class_<Reconstruction>(m, "Reconstruction")
      .def_property_readonly("marginals",
                             [](const Reconstruction& r) { return r.marginals; })
      .def_property_readonly("intermediates",
                             [](const Reconstruction& r) { return r.intermediates; })
      .def_property_readonly("data_marginals",
                             [](const Reconstruction& r) { return r.data_marginals; })
      .def_readonly("gap", &Reconstruction::gap)
      .def_readonly("dual_value", &Reconstruction::dual_value)
      .def_readonly("primal_value", &Reconstruction::primal_value)
      .def_readonly("converged", &Reconstruction::converged)
      .def("transport_coupling", &Reconstruction::dense_transport, py::arg("gap"))
      .def("data_coupling", &Reconstruction::dense_data_coupling, py::arg("i"));

  py::class_<SolveResult>(m, "SolveResult")
      .def_readonly("reconstruction", &SolveResult::reconstruction)
      .def_readonly("gap", &SolveResult::gap)
      .def_readonly("dual_value", &SolveResult::dual_value)
      .def_readonly("iterations", &SolveResult::iterations)
      .def_readonly("converged", &SolveResult::converged);

  m.def(
      "solve",
      [](const ProblemSpec& spec, double gap_tol, double grad_tol, int max_iter, int history,
         int threads) {
        SolverOptions opt;
        opt.gap_tol = gap_tol;
        opt.grad_tol = grad_tol;
        opt.max_iter = max_iter;
        opt.history = history;
        opt.threads = threads;
        py::gil_scoped_release release;
        return solve(spec, opt);
      },
      py::arg("spec"), py::arg("gap_tol") = 1e-5, py::arg("grad_tol") = 1e-9,
      py::arg("max_iter") = 4000, py::arg("history") = 10, py::arg("threads") = 1);
  m.def("primal_objective", &primal_objective, py::arg("reconstruction"), py::arg("spec"));

  py::class_<MarkovPathLaw>(m, "MarkovPathLaw")
      .def_property_readonly("initial", [](const MarkovPathLaw& l) { return l.initial; })
      .def("transition_row", &MarkovPathLaw::transition_row, py::arg("gap"), py::arg("state"));
  m.def("compose_markov", &compose_markov, py::arg("reconstruction"),
        py::arg("consistency_tol") = 1e-6);
  m.def(
      "sample_paths",
      [](const MarkovPathLaw& law, const Support& support, int n, std::uint64_t seed) {
        PathEnsemble ens = sample_paths(law, n, seed);
        return py::make_tuple(ens.states, ens.flat_coords(support));
      },
      py::arg("law"), py::arg("support"), py::arg("n"), py::arg("seed") = 0);
  m.def(
      "estimate_drift",
      [](const Reconstruction& rec, bool average, bool mass_weighted) {
        DriftField f = estimate_drift(rec, average, mass_weighted);
        std::vector<bool> defined(f.defined.begin(), f.defined.end());
        return py::make_tuple(f.velocity, defined);
      },
      py::arg("reconstruction"), py::arg("average_over_time") = true,
      py::arg("mass_weighted") = false);

  m.def(
      "gluing_reconstruction",
      [](const SnapshotSeries& series, const Support& sup, double sigma2) {
        return gluing_reconstruction(series, sup, sigma2);
      },
      py::arg("series"), py::arg("support"), py::arg("sigma2"));
  m.def("kernel_smooth", &kernel_smooth, py::arg("data"), py::arg("times"),
        py::arg("bandwidth"));

  py::class_<SimConfig>(m, "SimConfig")
      .def(py::init([](const std::string& potential, double sigma2, int dim, double dt_step,
                       double init_scale, const VectorXd& init_center, double birth_amp,
                       double death_amp) {
             SimConfig cfg;
             if (potential == "tristable") cfg.potential = PotentialSpec::tristable();
             else if (potential == "bistable") cfg.potential = PotentialSpec::bistable();
             else if (potential == "quadratic") cfg.potential = PotentialSpec::quadratic(1.0, dim);
             else throw InvalidInput("SimConfig: unknown potential " + potential);
             cfg.sigma2 = sigma2;
             cfg.dim = dim;
             cfg.dt_step = dt_step;
             cfg.init_scale = init_scale;
             if (init_center.size()) cfg.init_center = init_center;
             if (birth_amp > 0) cfg.birth = RateSpec::tanh_gate(birth_amp);
             if (death_amp > 0) cfg.death = RateSpec::constant(death_amp);
             return cfg;
           }),
           py::arg("potential"), py::arg("sigma2") = 0.25, py::arg("dim") = 4,
           py::arg("dt_step") = 4e-4, py::arg("init_scale") = 0.15,
           py::arg("init_center") = VectorXd(), py::arg("birth_amplitude") = 0.0,
           py::arg("death_amplitude") = 0.0);
  m.def(
      "sample_snapshots",
      [](const SimConfig& cfg, const VectorXd& times, const std::vector<int>& counts,
         std::uint64_t seed) {
        py::gil_scoped_release release;
        return sample_snapshots(cfg, times, counts, seed);
      },
      py::arg("config"), py::arg("times"), py::arg("counts"), py::arg("seed") = 0);
  m.def("ground_truth_clouds", &ground_truth_clouds, py::arg("config"), py::arg("times"),
        py::arg("count"), py::arg("seed") = 0);
  m.def("ground_truth_paths", &ground_truth_paths, py::arg("config"), py::arg("times"),
        py::arg("count"), py::arg("seed") = 0);

  m.def("w2_exact",
        py::overload_cast<const VectorXd&, const MatrixXd&, const VectorXd&, const MatrixXd&>(
            &w2_exact),
        py::arg("weights_a"), py::arg("points_a"), py::arg("weights_b"), py::arg("points_b"));
  m.def("w2_paths_empirical", &w2_paths_empirical, py::arg("flat_a"), py::arg("flat_b"),
        py::arg("num_times"));
  m.def(
      "drift_similarity",
      [](const MatrixXd& v_hat, const MatrixXd& v_true, const std::vector<bool>& defined) {
        std::vector<char> mask(defined.begin(), defined.end());
        return drift_similarity(v_hat, v_true, mask);
      },
      py::arg("v_hat"), py::arg("v_true"), py::arg("defined") = std::vector<bool>{});

  m.def(
      "augment_support",
      [](const Reconstruction& rec, const Support& sup, int i, int j, double s2, int k,
         std::uint64_t seed, bool literal_covariance) {
        AugmentOptions opt;
        opt.s2 = s2;
        opt.k = k;
        opt.seed = seed;
        opt.literal_covariance = literal_covariance;
        return augment_support(rec, sup, i, j, opt);
      },
      py::arg("reconstruction"), py::arg("support"), py::arg("time_i"), py::arg("time_j"),
      py::arg("s2"), py::arg("k"), py::arg("seed") = 0, py::arg("literal_covariance") = true);
}
