#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "stabopt/commands.hpp"
#include "stabopt/config.hpp"
#include "stabopt/continuation.hpp"
#include "stabopt/errors.hpp"
#include "stabopt/io.hpp"
#include "stabopt/optimizer.hpp"
#include "stabopt/problems.hpp"
#include "stabopt/sensitivity.hpp"
#include "stabopt/stability.hpp"

namespace py = pybind11;
using namespace stabopt;

namespace {

std::vector<std::pair<int, int>> cluster_pairs(const EigenSolution& e) {
  std::vector<std::pair<int, int>> out;
  for (const auto& c : e.clusters) out.emplace_back(c.begin, c.size);
  return out;
}

OptimizationResult optimize(const Model& model, const OptimizationConfig& cfg, py::object callback) {
  IterationCallback cb;
  if (!callback.is_none())
    cb = [callback](const IterationRecord& r, const Vec& x, const Vec& rho) { callback(r, x, rho); };
  return run_optimization(model, cfg, cb);
}

}  // namespace

PYBIND11_MODULE(_stabopt, m) {
  m.doc() = "Stability-constrained topology optimization of hyperelastic continua";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InputError>(m, "InputError", base.ptr());
  py::register_exception<AnalysisError>(m, "AnalysisError", base.ptr());

  // ---- model ----
  py::class_<Material>(m, "Material")
      .def(py::init<>())
      .def(py::init([](double E, double nu) { return Material{E, nu}; }), py::arg("E"), py::arg("nu"))
      .def_readwrite("E", &Material::E)
      .def_readwrite("nu", &Material::nu);

  py::class_<InterpolationParams>(m, "InterpolationParams")
      .def(py::init<>())
      .def_readwrite("p", &InterpolationParams::p)
      .def_readwrite("p_lin", &InterpolationParams::p_lin)
      .def_readwrite("eps", &InterpolationParams::eps)
      .def_readwrite("beta", &InterpolationParams::beta)
      .def_readwrite("c0", &InterpolationParams::c0)
      .def_readwrite("dc", &InterpolationParams::dc);

  py::class_<Interpolation>(m, "Interpolation")
      .def(py::init<>())
      .def_static("from_params", &Interpolation::from)
      .def_readwrite("p", &Interpolation::p)
      .def_readwrite("p_lin", &Interpolation::p_lin)
      .def_readwrite("eps", &Interpolation::eps)
      .def_readwrite("beta", &Interpolation::beta)
      .def_readwrite("c", &Interpolation::c);

  py::class_<Model>(m, "Model")
      .def_property_readonly("num_nodes", &Model::num_nodes)
      .def_property_readonly("num_elements", &Model::num_elements)
      .def_property_readonly("num_dofs", &Model::num_dofs)
      .def_property_readonly("nx", [](const Model& md) { return md.grid.nx; })
      .def_property_readonly("ny", [](const Model& md) { return md.grid.ny; })
      .def_property_readonly("elem_size", [](const Model& md) { return md.grid.elem_size; })
      .def_readonly("coords", &Model::coords)
      .def_readonly("elements", &Model::elements)
      .def_readonly("cell", &Model::cell)
      .def_readonly("load", &Model::load)
      .def_readonly("material", &Model::material)
      .def_property_readonly("fixed_dofs",
                             [](const Model& md) {
                               std::vector<int> d;
                               for (const auto& f : md.fixed) d.push_back(f.dof);
                               return d;
                             })
      .def("total_volume", &Model::total_volume);

  m.def("problem_names", &problem_names);
  m.def("build_problem", &build_problem, py::arg("name"), py::arg("nx"), py::arg("ny"), py::arg("h"),
        py::arg("load"), py::arg("material") = Material{}, py::arg("interp") = InterpolationParams{});
  m.def("extract_submesh", &extract_submesh, py::arg("parent"), py::arg("keep"));

  py::enum_<Symmetry>(m, "Symmetry")
      .value("none", Symmetry::None)
      .value("half_x", Symmetry::HalfX)
      .value("quarter", Symmetry::Quarter)
      .value("eighth", Symmetry::Eighth);

  m.def("apply_filter",
        [](const Model& md, double r_min, const Vec& x) { return apply_filter(build_filter(md, r_min), x); },
        py::arg("model"), py::arg("r_min"), py::arg("x"));
  m.def("volume_constraint", &volume_constraint, py::arg("rho"), py::arg("model"), py::arg("vf"));

  // ---- equilibrium and stability ----
  py::class_<SolverOptions>(m, "SolverOptions")
      .def(py::init<>())
      .def_readwrite("max_newton_iter", &SolverOptions::max_newton_iter)
      .def_readwrite("tolerance", &SolverOptions::tolerance)
      .def_readwrite("adapt_cutoff", &SolverOptions::adapt_cutoff);

  py::class_<EquilibriumState>(m, "EquilibriumState")
      .def_readonly("u", &EquilibriumState::u)
      .def_readonly("gamma", &EquilibriumState::gamma)
      .def_readonly("cutoff", &EquilibriumState::c)
      .def_property_readonly("increments", [](const EquilibriumState& s) { return s.record.increments; })
      .def_property_readonly("iterations", [](const EquilibriumState& s) { return s.record.iterations; });

  m.def("solve_equilibrium",
        [](const Model& md, const Vec& rho, double gamma, const Interpolation& ip, const SolverOptions& o) {
          return solve_equilibrium(md, rho, gamma, ip, o);
        },
        py::arg("model"), py::arg("rho"), py::arg("gamma"), py::arg("interp") = Interpolation{},
        py::arg("options") = SolverOptions{});

  py::class_<PseudoMassParams>(m, "PseudoMassParams")
      .def(py::init<>())
      .def_readwrite("q", &PseudoMassParams::q)
      .def_readwrite("eps_hat", &PseudoMassParams::eps_hat)
      .def_readwrite("p_m", &PseudoMassParams::p_m)
      .def_readwrite("w_low", &PseudoMassParams::w_low)
      .def_readwrite("w_high", &PseudoMassParams::w_high);

  m.def("pseudo_mass_value", &pseudo_mass_value, py::arg("w"), py::arg("params") = PseudoMassParams{});
  m.def("assemble_pseudo_mass", &assemble_pseudo_mass, py::arg("model"), py::arg("rho"),
        py::arg("params") = PseudoMassParams{});

  py::class_<AnalysisOptions>(m, "AnalysisOptions")
      .def(py::init<>())
      .def_readwrite("num_clusters", &AnalysisOptions::num_clusters)
      .def_readwrite("tol_mult", &AnalysisOptions::tol_mult)
      .def_readwrite("use_pseudo_mass", &AnalysisOptions::use_pseudo_mass)
      .def_readwrite("mass", &AnalysisOptions::mass)
      .def_readwrite("solver", &AnalysisOptions::solver);

  py::class_<EigenSolution>(m, "EigenSolution")
      .def_readonly("values", &EigenSolution::values)
      .def_readonly("vectors", &EigenSolution::vectors)
      .def_property_readonly("clusters", &cluster_pairs)
      .def_readonly("tol", &EigenSolution::tol)
      .def("all_simple", &EigenSolution::all_simple);

  py::class_<StabilityAnalysis>(m, "StabilityAnalysis")
      .def_readonly("state", &StabilityAnalysis::state)
      .def_readonly("interp", &StabilityAnalysis::ip)
      .def_readonly("mass", &StabilityAnalysis::mass)
      .def_readonly("eig", &StabilityAnalysis::eig);

  m.def("analyze_stability",
        [](const Model& md, const Vec& rho, double gamma, const Interpolation& ip, const AnalysisOptions& o) {
          return analyze_stability(md, rho, gamma, ip, o);
        },
        py::arg("model"), py::arg("rho"), py::arg("gamma"), py::arg("interp") = Interpolation{},
        py::arg("options") = AnalysisOptions{});

  py::enum_<CriticalKind>(m, "CriticalKind")
      .value("bifurcation", CriticalKind::Bifurcation)
      .value("limit", CriticalKind::Limit);

  // ---- sensitivities ----
  py::class_<CdmQuantity>(m, "CdmQuantity")
      .def_readonly("name", &CdmQuantity::name)
      .def_readonly("adjoint", &CdmQuantity::adjoint)
      .def_readonly("cdm", &CdmQuantity::cdm)
      .def_readonly("rel_error", &CdmQuantity::rel_error)
      .def_readonly("max_rel", &CdmQuantity::max_rel)
      .def_readonly("worst_element", &CdmQuantity::worst_element);

  py::class_<CdmReport>(m, "CdmReport")
      .def_readonly("h", &CdmReport::h)
      .def_readonly("elements", &CdmReport::elements)
      .def_readonly("quantities", &CdmReport::quantities)
      .def_readonly("all_simple", &CdmReport::all_simple)
      .def_readonly("max_rel", &CdmReport::max_rel)
      .def_readonly("worst_quantity", &CdmReport::worst_quantity);

  m.def("verify_sensitivities",
        [](const Model& md, const Vec& rho, double gamma, double h, int num_clusters, std::vector<int> elements,
           int workers) {
          CdmOptions o;
          o.h = h;
          o.analysis.num_clusters = num_clusters;
          o.elements = std::move(elements);
          o.workers = workers;
          py::gil_scoped_release release;
          return verify_sensitivities_cdm(md, rho, gamma, Interpolation::from(md.interp), o);
        },
        py::arg("model"), py::arg("rho"), py::arg("gamma") = 1.0, py::arg("h") = 1e-5,
        py::arg("num_clusters") = 6, py::arg("elements") = std::vector<int>{}, py::arg("workers") = 1);

  // ---- optimizer ----
  py::class_<Penalties>(m, "Penalties")
      .def(py::init<>())
      .def_readwrite("p", &Penalties::p)
      .def_readwrite("p_lin", &Penalties::p_lin)
      .def_readwrite("p_m", &Penalties::p_m);

  py::class_<ContinuationSchedule>(m, "ContinuationSchedule")
      .def(py::init<>())
      .def_readwrite("enabled", &ContinuationSchedule::enabled)
      .def_readwrite("step", &ContinuationSchedule::step)
      .def_readwrite("every", &ContinuationSchedule::every);

  py::class_<OptimizationConfig>(m, "OptimizationConfig")
      .def(py::init<>())
      .def_readwrite("lambda_hat", &OptimizationConfig::lambda_hat)
      .def_readwrite("volume_fraction", &OptimizationConfig::volume_fraction)
      .def_readwrite("num_clusters", &OptimizationConfig::num_clusters)
      .def_readwrite("theta", &OptimizationConfig::theta)
      .def_readwrite("mma_move", &OptimizationConfig::mma_move)
      .def_readwrite("max_outer", &OptimizationConfig::max_outer)
      .def_readwrite("inner_max", &OptimizationConfig::inner_max)
      .def_readwrite("tol_mult", &OptimizationConfig::tol_mult)
      .def_readwrite("gamma", &OptimizationConfig::gamma)
      .def_readwrite("filter_radius", &OptimizationConfig::filter_radius)
      .def_readwrite("symmetry", &OptimizationConfig::symmetry)
      .def_readwrite("schedule", &OptimizationConfig::schedule)
      .def("validate", &OptimizationConfig::validate);

  py::class_<IterationRecord>(m, "IterationRecord")
      .def_readonly("iter", &IterationRecord::iter)
      .def_readonly("f0", &IterationRecord::f0)
      .def_readonly("f1", &IterationRecord::f1)
      .def_readonly("eigenvalues", &IterationRecord::eigenvalues)
      .def_readonly("multiplicities", &IterationRecord::multiplicities)
      .def_readonly("cutoff", &IterationRecord::cutoff)
      .def_readonly("cutoff_updates", &IterationRecord::cutoff_updates)
      .def_readonly("inner", &IterationRecord::inner)
      .def_readonly("penalties", &IterationRecord::penalties)
      .def_readonly("change", &IterationRecord::change);

  py::class_<OptimizationResult>(m, "OptimizationResult")
      .def_readonly("x", &OptimizationResult::x)
      .def_readonly("rho", &OptimizationResult::rho)
      .def_property_readonly("trace", [](const OptimizationResult& r) { return r.trace.records; })
      .def_readonly("final", &OptimizationResult::final)
      .def_readonly("aborted", &OptimizationResult::aborted)
      .def_readonly("message", &OptimizationResult::message);

  m.def("run_optimization", &optimize, py::arg("model"), py::arg("config"), py::arg("callback") = py::none(),
        "Run the optimization; callback(record, x, rho) is called after every iteration.");
  m.def("evaluate_design", &evaluate_design, py::arg("model"), py::arg("rho"), py::arg("config"),
        py::arg("penalties") = Penalties{});

  // ---- continuation ----
  py::class_<PathOptions>(m, "PathOptions")
      .def(py::init<>())
      .def_readwrite("arc_length", &PathOptions::arc_length)
      .def_readwrite("max_points", &PathOptions::max_points)
      .def_readwrite("gamma_max", &PathOptions::gamma_max)
      .def_readwrite("num_eigenvalues", &PathOptions::num_eigenvalues)
      .def_readwrite("use_pseudo_mass", &PathOptions::use_pseudo_mass)
      .def_readwrite("detect_criticals", &PathOptions::detect_criticals);

  py::class_<PathPoint>(m, "PathPoint")
      .def_readonly("u", &PathPoint::u)
      .def_readonly("gamma", &PathPoint::gamma)
      .def_readonly("eigenvalues", &PathPoint::eigenvalues)
      .def_readonly("stable", &PathPoint::stable);

  py::class_<CriticalPoint>(m, "CriticalPoint")
      .def_readonly("gamma", &CriticalPoint::gamma)
      .def_readonly("u", &CriticalPoint::u)
      .def_readonly("phi", &CriticalPoint::phi)
      .def_readonly("multiplicity", &CriticalPoint::multiplicity)
      .def_readonly("kind", &CriticalPoint::kind)
      .def_readonly("load_alignment", &CriticalPoint::load_alignment)
      .def_readonly("segment", &CriticalPoint::segment);

  py::class_<EquilibriumPath>(m, "EquilibriumPath")
      .def_readonly("branch_id", &EquilibriumPath::branch_id)
      .def_readonly("parent", &EquilibriumPath::parent)
      .def_readonly("points", &EquilibriumPath::points)
      .def_readonly("criticals", &EquilibriumPath::criticals)
      .def_readonly("arc_length", &EquilibriumPath::arc_length)
      .def_readonly("monitor_dof", &EquilibriumPath::monitor_dof)
      .def_readonly("complete", &EquilibriumPath::complete)
      .def_readonly("diagnostic", &EquilibriumPath::diagnostic);

  m.def("trace_primary",
        [](const Model& md, const Vec& rho, const PathOptions& o) {
          py::gil_scoped_release release;
          return trace_primary(md, rho, Interpolation::from(md.interp), o);
        },
        py::arg("model"), py::arg("rho"), py::arg("options") = PathOptions{});

  py::class_<BranchPoint>(m, "BranchPoint")
      .def_readonly("u", &BranchPoint::u)
      .def_readonly("gamma", &BranchPoint::gamma)
      .def_readonly("residual", &BranchPoint::residual);

  // ---- configuration and post-processing ----
  py::class_<ProblemConfig>(m, "ProblemConfig")
      .def_readwrite("preset", &ProblemConfig::preset)
      .def_readwrite("nx", &ProblemConfig::nx)
      .def_readwrite("ny", &ProblemConfig::ny)
      .def_readwrite("element_size", &ProblemConfig::element_size)
      .def_readwrite("load", &ProblemConfig::load)
      .def_readwrite("target_load", &ProblemConfig::target_load)
      .def_readwrite("material", &ProblemConfig::material);

  py::class_<AnalysisConfig>(m, "AnalysisConfig")
      .def_readwrite("num_clusters", &AnalysisConfig::num_clusters)
      .def_readwrite("pseudo_mass", &AnalysisConfig::pseudo_mass)
      .def_readwrite("max_points", &AnalysisConfig::max_points)
      .def_readwrite("path_limit", &AnalysisConfig::path_limit)
      .def_readwrite("tau", &AnalysisConfig::tau)
      .def_readwrite("radius_factor", &AnalysisConfig::radius_factor)
      .def_readwrite("threshold", &AnalysisConfig::threshold)
      .def_readwrite("branch_points", &AnalysisConfig::branch_points)
      .def_readwrite("seed", &AnalysisConfig::seed)
      .def_readwrite("workers", &AnalysisConfig::workers)
      .def_readwrite("fd_step", &AnalysisConfig::fd_step)
      .def_readwrite("cdm_tolerance", &AnalysisConfig::cdm_tolerance);

  py::class_<OutputConfig>(m, "OutputConfig")
      .def_readwrite("directory", &OutputConfig::directory)
      .def_readwrite("snapshot_every", &OutputConfig::snapshot_every)
      .def_readwrite("csv", &OutputConfig::csv)
      .def_readwrite("pgm", &OutputConfig::pgm);

  py::class_<RunConfig>(m, "RunConfig")
      .def_readonly("source", &RunConfig::source)
      .def_readwrite("problem", &RunConfig::problem)
      .def_readwrite("optimizer", &RunConfig::optimizer)
      .def_readwrite("analysis", &RunConfig::analysis)
      .def_readwrite("output", &RunConfig::output)
      .def("build_model", &RunConfig::build_model);

  m.def("parse_run_config", &parse_run_config, py::arg("text"), py::arg("origin") = "<string>");
  m.def("load_run_config", &load_run_config, py::arg("path"));

  py::class_<PostBuckleReport>(m, "PostBuckleReport")
      .def_readonly("mesh", &PostBuckleReport::mesh)
      .def_readonly("gamma_target", &PostBuckleReport::gamma_target)
      .def_readonly("primary", &PostBuckleReport::primary)
      .def_readonly("branches", &PostBuckleReport::branches)
      .def_readonly("bcc_crossings", &PostBuckleReport::bcc_crossings)
      .def_readonly("reached_target", &PostBuckleReport::reached_target)
      .def_readonly("notes", &PostBuckleReport::notes);

  m.def("post_buckle",
        [](const Model& md, const Vec& rho, const RunConfig& cfg) {
          py::gil_scoped_release release;
          return post_buckle(md, rho, cfg);
        },
        py::arg("model"), py::arg("rho"), py::arg("config"));
  m.def("threshold_elements", &threshold_elements, py::arg("rho"), py::arg("level"));
  m.def("elements_connected", &elements_connected, py::arg("model"), py::arg("elements"));

  py::class_<DensityGrid>(m, "DensityGrid")
      .def(py::init<>())
      .def(py::init([](int nx, int ny, double h, const Vec& rho) { return DensityGrid{nx, ny, h, rho}; }),
           py::arg("nx"), py::arg("ny"), py::arg("elem_size"), py::arg("rho"))
      .def_readwrite("nx", &DensityGrid::nx)
      .def_readwrite("ny", &DensityGrid::ny)
      .def_readwrite("elem_size", &DensityGrid::elem_size)
      .def_readwrite("rho", &DensityGrid::rho);

  m.def("density_grid", &density_grid, py::arg("model"), py::arg("rho"));
  m.def("read_density_csv", &read_density_csv, py::arg("path"));
  m.def("write_density_csv", &write_density_csv, py::arg("path"), py::arg("grid"));
  m.def("write_pgm", &write_pgm, py::arg("path"), py::arg("grid"));
  m.def("format_double", &format_double);
  m.def("parse_double", &parse_double);

  py::class_<PathRow>(m, "PathRow")
      .def_readonly("branch", &PathRow::branch)
      .def_readonly("step", &PathRow::step)
      .def_readonly("gamma", &PathRow::gamma)
      .def_readonly("displacement", &PathRow::displacement)
      .def_readonly("lambda1", &PathRow::lambda1)
      .def_readonly("stable", &PathRow::stable)
      .def_readonly("critical", &PathRow::critical);

  m.def("path_rows", &path_rows, py::arg("path"));
  m.def("read_path_csv", &read_path_csv, py::arg("path"));

  m.attr("__version__") = "0.1.0";
}
