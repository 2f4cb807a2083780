#include "stabopt/commands.hpp"

#include <cmath>
#include <filesystem>
#include <map>
#include <random>

#include "json.hpp"
#include "stabopt/errors.hpp"
#include "stabopt/io.hpp"
#include "stabopt/optimizer.hpp"
#include "stabopt/sensitivity.hpp"
#include "stabopt/stability.hpp"

namespace stabopt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

RunConfig load_with_overrides(const CommandOptions& o) {
  if (o.config.empty()) throw InputError("no config file given (--config)");
  RunConfig c = load_run_config(o.config);
  if (!o.out_dir.empty()) c.output.directory = o.out_dir;
  if (o.seed) c.analysis.seed = *o.seed;
  if (o.workers) {
    if (*o.workers < 1) throw InputError("--workers must be >= 1");
    c.analysis.workers = *o.workers;
  }
  if (o.threshold) {
    if (!(*o.threshold > 0 && *o.threshold < 1)) throw InputError("--threshold must be in (0, 1)");
    c.analysis.threshold = *o.threshold;
  }
  if (o.fd_step) {
    if (!(*o.fd_step > 0)) throw InputError("--fd-step must be positive");
    c.analysis.fd_step = *o.fd_step;
  }
  return c;
}

fs::path prepare_out_dir(const RunConfig& c) {
  fs::path dir(c.output.directory);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw InputError("cannot create output directory '" + dir.string() + "': " + ec.message());
  return dir;
}

void write_json(const fs::path& p, const json& j) { write_text_file(p.string(), j.dump(2) + "\n"); }

// Reads the density file and checks it against the config mesh.
Vec load_density(const std::string& path, const Model& model, const RunConfig& c) {
  if (path.empty()) throw InputError("no density file given (--density)");
  DensityGrid g = read_density_csv(path);
  if (g.nx != c.problem.nx || g.ny != c.problem.ny)
    throw InputError(path + ": density grid is " + std::to_string(g.nx) + "x" + std::to_string(g.ny) +
                     ", config mesh is " + std::to_string(c.problem.nx) + "x" + std::to_string(c.problem.ny));
  if (std::abs(g.elem_size - c.problem.element_size) > 1e-12 * c.problem.element_size)
    throw InputError(path + ": element size does not match the config");
  if (g.rho.size() != model.num_elements()) throw InputError(path + ": density length does not match the mesh");
  for (Eigen::Index e = 0; e < g.rho.size(); ++e)
    if (!(g.rho[e] >= 0 && g.rho[e] <= 1)) throw InputError(path + ": densities must lie in [0, 1]");
  return g.rho;
}

json eigen_json(const EigenSolution& eig) {
  json clusters = json::array();
  for (const auto& cl : eig.clusters) {
    double mean = 0;
    for (int i = 0; i < cl.size; ++i) mean += eig.values[cl.begin + i];
    clusters.push_back({{"begin", cl.begin}, {"size", cl.size}, {"mean", mean / cl.size}});
  }
  std::vector<double> v(eig.values.data(), eig.values.data() + eig.values.size());
  return {{"eigenvalues", v}, {"clusters", clusters}};
}

json critical_json(const CriticalPoint& cp, double target) {
  return {{"gamma", cp.gamma},
          {"kind", to_string(cp.kind)},
          {"multiplicity", cp.multiplicity},
          {"lambda", cp.lambda},
          {"load_alignment", cp.load_alignment},
          {"below_target", cp.gamma < target}};
}

template <class F>
int guarded(std::ostream& log, F&& body) {
  try {
    return body();
  } catch (const InputError& e) {
    log << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    log << "analysis failed: " << e.what() << "\n";
    return kExitAnalysis;
  } catch (const std::exception& e) {
    log << "analysis failed: " << e.what() << "\n";
    return kExitAnalysis;
  }
}

}  // namespace

std::vector<int> threshold_elements(const Vec& rho, double level) {
  std::vector<int> keep;
  for (Eigen::Index e = 0; e < rho.size(); ++e)
    if (rho[e] >= level) keep.push_back(static_cast<int>(e));
  return keep;
}

bool elements_connected(const Model& model, const std::vector<int>& elements) {
  if (elements.empty()) return false;
  std::map<std::pair<int, int>, std::vector<int>> edges;
  for (size_t k = 0; k < elements.size(); ++k) {
    const auto& en = model.elements[elements[k]];
    for (int a = 0; a < 4; ++a) {
      int n0 = en[a], n1 = en[(a + 1) % 4];
      if (n0 > n1) std::swap(n0, n1);
      edges[{n0, n1}].push_back(static_cast<int>(k));
    }
  }
  std::vector<std::vector<int>> adj(elements.size());
  for (const auto& [key, owners] : edges)
    for (size_t i = 0; i < owners.size(); ++i)
      for (size_t j = i + 1; j < owners.size(); ++j) {
        adj[owners[i]].push_back(owners[j]);
        adj[owners[j]].push_back(owners[i]);
      }
  std::vector<char> seen(elements.size(), 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  size_t count = 1;
  while (!stack.empty()) {
    const int k = stack.back();
    stack.pop_back();
    for (int l : adj[k])
      if (!seen[l]) {
        seen[l] = 1;
        ++count;
        stack.push_back(l);
      }
  }
  return count == elements.size();
}

PostBuckleReport post_buckle(const Model& parent, const Vec& rho, const RunConfig& cfg) {
  const AnalysisConfig& ac = cfg.analysis;
  if (rho.size() != parent.num_elements()) throw InputError("density length does not match the mesh");
  std::vector<int> keep = threshold_elements(rho, ac.threshold);
  if (keep.empty()) throw InputError("no element reaches the threshold " + format_double(ac.threshold));
  if (!elements_connected(parent, keep))
    throw InputError("solid region at threshold " + format_double(ac.threshold) + " is disconnected");

  // supports on void nodes carry nothing; loads there are an error
  Model trimmed = parent;
  std::vector<char> solid_node(parent.num_nodes(), 0);
  for (int e : keep)
    for (int n : parent.elements[e]) solid_node[n] = 1;
  std::erase_if(trimmed.fixed, [&](const FixedDof& f) { return !solid_node[f.dof / 2]; });
  if (trimmed.fixed.empty()) throw InputError("no support touches the solid region");

  PostBuckleReport rep;
  rep.mesh = extract_submesh(trimmed, keep);
  rep.gamma_target = ac.path_limit * cfg.problem.target_load;
  const Vec solid = Vec::Ones(rep.mesh.num_elements());
  const Interpolation ip = Interpolation::from(rep.mesh.interp);
  PathOptions po;
  po.arc_length = ac.arc_length;
  po.max_points = ac.max_points;
  po.gamma_max = rep.gamma_target;
  po.use_pseudo_mass = false;
  rep.primary = trace_primary(rep.mesh, solid, ip, po);
  rep.primary.branch_id = 0;
  rep.reached_target = !rep.primary.points.empty() && rep.primary.points.back().gamma >= rep.gamma_target;
  if (!rep.primary.complete) rep.notes.push_back("primary path: " + rep.primary.diagnostic);

  const CriticalPoint* cp = nullptr;
  for (const auto& c : rep.primary.criticals) {
    if (c.gamma >= rep.gamma_target) break;
    if (c.kind == CriticalKind::Limit) {
      rep.notes.push_back("limit point at gamma " + format_double(c.gamma));
      continue;
    }
    cp = &c;
    break;
  }
  if (!cp) return rep;

  PathTracer tracer(rep.mesh, solid, ip, po);
  const double ell = rep.primary.arc_length;
  int next_id = 1;
  if (cp->multiplicity == 1) {
    for (int sign : {1, -1}) {
      EquilibriumPath p;
      try {
        BranchSwitchResult sw = branch_switch_simple(tracer, *cp, ac.tau, sign);
        const Vec dir = sw.u - cp->u;
        p = tracer.trace(sw.u, sw.gamma, ell, &dir, sw.gamma - cp->gamma, ac.branch_points);
      } catch (const Error& e) {
        p.complete = false;
        p.diagnostic = e.what();
      }
      p.branch_id = next_id++;
      p.parent = 0;
      if (!p.complete) rep.notes.push_back("branch " + std::to_string(p.branch_id) + ": " + p.diagnostic);
      rep.branches.push_back(std::move(p));
    }
  } else {
    BccOptions bo;
    bo.radius_factor = ac.radius_factor;
    bo.seed = ac.seed;
    BccResult bcc = bcc_traverse(tracer, *cp, bo);
    if (!bcc.closed) rep.notes.push_back("branch connecting curve: " + bcc.diagnostic);
    rep.bcc_crossings = bcc.crossings;
    // crossings with modal content start secondary branches
    std::vector<BranchPoint> secondary;
    for (const auto& x : bcc.crossings) {
      const Vec d = x.u - cp->u;
      const double modal = (cp->modes.transpose() * d).norm();
      if (modal > 0.5 * bcc.radius) secondary.push_back(x);
    }
    auto paths = trace_post_buckling(tracer, *cp, secondary, ell, ac.branch_points);
    for (auto& p : paths) {
      p.branch_id = next_id++;
      if (!p.complete) rep.notes.push_back("branch " + std::to_string(p.branch_id) + ": " + p.diagnostic);
      rep.branches.push_back(std::move(p));
    }
  }
  return rep;
}

int cmd_optimize(const CommandOptions& opts, std::ostream& log) {
  return guarded(log, [&] {
    RunConfig c = load_with_overrides(opts);
    Model model = c.build_model();
    const fs::path dir = prepare_out_dir(c);
    TraceWriter trace((dir / "trace.csv").string());
    const int every = c.output.snapshot_every;
    auto on_iter = [&](const IterationRecord& r, const Vec&, const Vec& rho) {
      trace.write(r);
      if (every > 0 && r.iter % every == 0) {
        char name[64];
        std::snprintf(name, sizeof name, "density_%05d.csv", r.iter);
        write_density_csv((dir / name).string(), density_grid(model, rho));
      }
    };
    log << "optimize: " << model.num_elements() << " elements, V_f " << c.optimizer.volume_fraction
        << (c.optimizer.stability() ? ", lambda_hat " + format_double(c.optimizer.lambda_hat) : std::string())
        << "\n";
    OptimizationResult r = run_optimization(model, c.optimizer, on_iter);
    const DensityGrid g = density_grid(model, r.rho);
    if (c.output.csv) write_density_csv((dir / "density.csv").string(), g);
    if (c.output.pgm) write_pgm((dir / "density.pgm").string(), g);

    const auto& f = r.final;
    const double lambda1 = f.eigenvalues.empty() ? std::nan("") : f.eigenvalues.front();
    json s = {{"command", "optimize"},
              {"iterations", r.trace.records.size()},
              {"aborted", r.aborted},
              {"message", r.message},
              {"f0", f.f0},
              {"f1", f.f1},
              {"volume_fraction", c.optimizer.volume_fraction * (1 + f.f1)},
              {"eigenvalues", f.eigenvalues},
              {"multiplicities", f.multiplicities},
              {"lambda_hat", c.optimizer.lambda_hat},
              {"volume_satisfied", f.f1 <= 1e-3}};
    if (c.optimizer.stability())
      s["stability_satisfied"] = lambda1 >= c.optimizer.lambda_hat * (1 - 1e-3);
    write_json(dir / "summary.json", s);
    log << "f0 " << format_double(f.f0) << "  f1 " << format_double(f.f1) << "  lambda_1 "
        << format_double(lambda1) << "\n";
    if (r.aborted) {
      log << "analysis failed: " << r.message << "\n";
      return static_cast<int>(kExitAnalysis);
    }
    return static_cast<int>(kExitOk);
  });
}

int cmd_analyze(const CommandOptions& opts, std::ostream& log) {
  return guarded(log, [&] {
    RunConfig c = load_with_overrides(opts);
    Model model = c.build_model();
    const Vec rho = load_density(opts.density, model, c);
    const fs::path dir = prepare_out_dir(c);

    AnalysisOptions ao;
    ao.num_clusters = c.analysis.num_clusters;
    ao.tol_mult = c.optimizer.tol_mult;
    ao.use_pseudo_mass = c.analysis.pseudo_mass;
    ao.mass = c.optimizer.mass;
    json s = {{"command", "analyze"}, {"gamma", c.problem.target_load}};

    // no load-bearing material: the pseudo-mass collapses to eps_hat * I
    if (c.analysis.pseudo_mass) {
      const Vec S = assemble_pseudo_mass(model, rho, ao.mass);
      double smax = 0;
      for (int d = 0; d < model.num_dofs(); ++d)
        if (!model.dof_fixed[d]) smax = std::max(smax, S[d]);
      if (smax <= 1e3 * ao.mass.eps_hat) {
        s["degenerate"] = true;
        s["message"] = "pseudo-mass is eps_hat * I: no solid material";
        write_json(dir / "summary.json", s);
        log << "analysis degenerate: density field has no solid material\n";
        return static_cast<int>(kExitAnalysis);
      }
    }
    s["degenerate"] = false;
    StabilityAnalysis a = analyze_stability(model, rho, c.problem.target_load, Interpolation::from(model.interp), ao);
    s.update(eigen_json(a.eig));
    s["compliance"] = a.state.gamma * model.load.dot(a.state.u);
    s["stable"] = a.eig.count() > 0 && a.eig.values[0] > 0;
    s["cutoff"] = a.state.c;
    write_json(dir / "summary.json", s);
    write_modes_csv((dir / "modes.csv").string(), model, a.eig.vectors);
    log << "lambda:";
    for (int i = 0; i < a.eig.count(); ++i) log << " " << format_double(a.eig.values[i]);
    log << "\n" << (s["stable"].get<bool>() ? "stable" : "unstable") << "\n";
    return static_cast<int>(kExitOk);
  });
}

int cmd_verify_sens(const CommandOptions& opts, std::ostream& log) {
  return guarded(log, [&] {
    RunConfig c = load_with_overrides(opts);
    Model model = c.build_model();
    Vec rho;
    if (!opts.density.empty()) {
      rho = load_density(opts.density, model, c);
    } else {
      std::mt19937_64 rng(c.analysis.seed);
      std::uniform_real_distribution<double> U(0.0, 1.0);
      rho.resize(model.num_elements());
      for (int e = 0; e < rho.size(); ++e) rho[e] = U(rng);
    }
    const fs::path dir = prepare_out_dir(c);
    CdmOptions co;
    co.h = c.analysis.fd_step;
    co.analysis.num_clusters = c.analysis.num_clusters;
    co.analysis.tol_mult = c.optimizer.tol_mult;
    co.analysis.use_pseudo_mass = c.analysis.pseudo_mass;
    co.workers = c.analysis.workers;
    co.fault.kernel = opts.fault_kernel;
    CdmReport r = verify_sensitivities_cdm(model, rho, c.problem.target_load, Interpolation::from(model.interp), co);

    std::string csv = "quantity,element,adjoint,cdm,rel_error\n";
    json q = json::array();
    for (const auto& qu : r.quantities) {
      for (size_t i = 0; i < r.elements.size(); ++i)
        csv += qu.name + "," + std::to_string(r.elements[i]) + "," + format_double(qu.adjoint[i]) + "," +
               format_double(qu.cdm[i]) + "," + format_double(qu.rel_error[i]) + "\n";
      q.push_back({{"name", qu.name}, {"max_rel_error", qu.max_rel}, {"worst_element", qu.worst_element}});
    }
    write_text_file((dir / "cdm_report.csv").string(), csv);
    const bool pass = r.all_simple && r.max_rel <= c.analysis.cdm_tolerance;
    json s = {{"command", "verify-sens"},
              {"h", r.h},
              {"seed", c.analysis.seed},
              {"all_simple", r.all_simple},
              {"excluded", r.excluded},
              {"max_rel_error", r.max_rel},
              {"worst_quantity", r.worst_quantity},
              {"tolerance", c.analysis.cdm_tolerance},
              {"quantities", q},
              {"pass", pass}};
    write_json(dir / "summary.json", s);
    for (const auto& qu : r.quantities)
      log << qu.name << ": max rel error " << format_double(qu.max_rel) << "\n";
    if (!r.all_simple) {
      log << "FAIL: eigenvalues in the window are not all simple\n";
      return static_cast<int>(kExitAcceptance);
    }
    if (!pass) {
      int worst = -1;
      for (const auto& qu : r.quantities)
        if (qu.name == r.worst_quantity) worst = qu.worst_element;
      log << "FAIL: kernel '" << r.worst_quantity << "' max rel error " << format_double(r.max_rel)
          << " at element " << worst << " exceeds " << format_double(c.analysis.cdm_tolerance) << "\n";
      return static_cast<int>(kExitAcceptance);
    }
    log << "PASS: max rel error " << format_double(r.max_rel) << "\n";
    return static_cast<int>(kExitOk);
  });
}

int cmd_post_buckle(const CommandOptions& opts, std::ostream& log) {
  return guarded(log, [&] {
    RunConfig c = load_with_overrides(opts);
    Model model = c.build_model();
    const Vec rho = load_density(opts.density, model, c);
    const fs::path dir = prepare_out_dir(c);
    PostBuckleReport rep = post_buckle(model, rho, c);

    std::vector<PathRow> rows = path_rows(rep.primary);
    json branches = json::array();
    for (const auto& b : rep.branches) {
      auto br = path_rows(b);
      rows.insert(rows.end(), br.begin(), br.end());
      branches.push_back({{"id", b.branch_id},
                          {"parent", b.parent},
                          {"points", b.points.size()},
                          {"complete", b.complete},
                          {"diagnostic", b.diagnostic}});
    }
    write_path_csv((dir / "paths.csv").string(), rows);
    json crit = json::array();
    int below = 0;
    for (const auto& cp : rep.primary.criticals) {
      crit.push_back(critical_json(cp, rep.gamma_target));
      below += cp.gamma < rep.gamma_target;
    }
    json s = {{"command", "post-buckle"},
              {"threshold", c.analysis.threshold},
              {"elements", rep.mesh.num_elements()},
              {"gamma_target", rep.gamma_target},
              {"reached_target", rep.reached_target},
              {"primary_points", rep.primary.points.size()},
              {"criticals", crit},
              {"criticals_below_target", below},
              {"branches", branches},
              {"bcc_crossings", rep.bcc_crossings.size()},
              {"notes", rep.notes}};
    write_json(dir / "summary.json", s);
    if (c.output.csv) write_density_csv((dir / "solid.csv").string(), density_grid(rep.mesh, Vec::Ones(rep.mesh.num_elements())));
    log << "primary: " << rep.primary.points.size() << " points, " << below << " critical point(s) below target\n";
    for (const auto& cp : rep.primary.criticals)
      log << "  " << to_string(cp.kind) << " at gamma " << format_double(cp.gamma) << " (multiplicity "
          << cp.multiplicity << ")\n";
    log << rep.branches.size() << " secondary branch(es) exported\n";
    if (!rep.primary.complete && !rep.reached_target) {
      log << "analysis failed: " << rep.primary.diagnostic << "\n";
      return static_cast<int>(kExitAnalysis);
    }
    return static_cast<int>(kExitOk);
  });
}

}  // namespace stabopt
