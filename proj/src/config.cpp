#include "stabopt/config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

#include "stabopt/errors.hpp"
#include "stabopt/problems.hpp"

namespace stabopt {

namespace {

std::string at(const std::string& origin, const YAML::Mark& m) {
  return origin + ":" + std::to_string(m.line + 1) + ": ";
}

// Map node whose keys must all be consumed.
class Section {
 public:
  Section(const YAML::Node& node, std::string path, const std::string& origin)
      : node_(node), path_(std::move(path)), origin_(origin) {
    if (node_ && !node_.IsNull() && !node_.IsMap())
      throw InputError(at(origin_, node_.Mark()) + "'" + path_ + "' must be a mapping");
  }

  bool has(const char* key) const { return node_ && node_.IsMap() && node_[key]; }

  YAML::Node child(const char* key) {
    used_.insert(key);
    return has(key) ? node_[key] : YAML::Node(YAML::NodeType::Undefined);
  }

  template <class T>
  void get(const char* key, T& out) {
    YAML::Node v = child(key);
    if (!v) return;
    try {
      out = v.as<T>();
    } catch (const YAML::BadConversion&) {
      throw InputError(at(origin_, v.Mark()) + "bad value for '" + path_ + "." + key + "'");
    }
  }

  template <class T>
  void require(const char* key, T& out) {
    if (!has(key))
      throw InputError(at(origin_, node_ ? node_.Mark() : YAML::Mark()) + "missing required key '" + key +
                       "' in section '" + path_ + "'");
    get(key, out);
  }

  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const std::string k = kv.first.as<std::string>();
      if (!used_.count(k))
        throw InputError(at(origin_, kv.first.Mark()) + "unknown key '" + k + "' in section '" + path_ + "'");
    }
  }

  std::string where(const char* key) {
    YAML::Node v = has(key) ? node_[key] : node_;
    return at(origin_, v ? v.Mark() : YAML::Mark());
  }

 private:
  YAML::Node node_;
  std::string path_;
  const std::string& origin_;
  std::set<std::string> used_;
};

int parse_component(const std::string& s, bool allow_both, const std::string& where) {
  if (s == "x") return 0;
  if (s == "y") return 1;
  if (allow_both && s == "both") return 2;
  throw InputError(where + "component must be x, y" + std::string(allow_both ? " or both" : "") + ", got '" +
                   s + "'");
}

std::vector<BoundarySpec> parse_boundary(const YAML::Node& list, const std::string& name, bool support,
                                         const std::string& origin) {
  std::vector<BoundarySpec> out;
  if (!list) return out;
  if (!list.IsSequence()) throw InputError(at(origin, list.Mark()) + "'" + name + "' must be a list");
  for (const auto& item : list) {
    Section s(item, name + "[]", origin);
    BoundarySpec b;
    std::vector<int> node;
    s.get("edge", b.edge);
    s.get("node", node);
    std::string comp;
    s.require("component", comp);
    b.component = parse_component(comp, support, s.where("component"));
    s.get(support ? "value" : "magnitude", b.value);
    if (!support && !s.has("magnitude"))
      throw InputError(s.where("magnitude") + "missing required key 'magnitude' in section '" + name + "[]'");
    if (b.edge.empty() == node.empty())
      throw InputError(s.where("node") + "give exactly one of 'edge' or 'node'");
    if (!node.empty()) {
      if (node.size() != 2) throw InputError(s.where("node") + "'node' must be [i, j]");
      b.i = node[0];
      b.j = node[1];
    } else if (b.edge != "left" && b.edge != "right" && b.edge != "bottom" && b.edge != "top") {
      throw InputError(s.where("edge") + "edge must be left, right, bottom or top");
    }
    s.finish();
    out.push_back(b);
  }
  return out;
}

std::vector<int> edge_nodes(const std::string& edge, int nx, int ny) {
  std::vector<int> n;
  if (edge == "left" || edge == "right") {
    const int i = edge == "left" ? 0 : nx;
    for (int j = 0; j <= ny; ++j) n.push_back(grid_node(nx, i, j));
  } else {
    const int j = edge == "bottom" ? 0 : ny;
    for (int i = 0; i <= nx; ++i) n.push_back(grid_node(nx, i, j));
  }
  return n;
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::string& origin) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw InputError(at(origin, e.mark) + e.msg);
  }
  if (!root || root.IsNull()) throw InputError(origin + ": empty configuration");
  RunConfig c;
  c.source = origin;
  Section top(root, "<root>", origin);
  if (!top.has("problem")) throw InputError(origin + ":1: missing required section 'problem'");
  if (!top.has("optimizer")) throw InputError(origin + ":1: missing required section 'optimizer'");

  {
    Section s(top.child("problem"), "problem", origin);
    ProblemConfig& p = c.problem;
    s.require("preset", p.preset);
    s.require("nx", p.nx);
    s.require("ny", p.ny);
    s.get("element_size", p.element_size);
    s.get("load", p.load);
    s.get("target_load", p.target_load);
    {
      Section m(s.child("material"), "problem.material", origin);
      m.get("E", p.material.E);
      m.get("nu", p.material.nu);
      m.finish();
    }
    p.supports = parse_boundary(s.child("supports"), "problem.supports", true, origin);
    p.loads = parse_boundary(s.child("loads"), "problem.loads", false, origin);
    if (p.nx <= 0 || p.ny <= 0) throw InputError(s.where("nx") + "nx and ny must be positive");
    if (!(p.element_size > 0)) throw InputError(s.where("element_size") + "element_size must be positive");
    if (!(p.target_load > 0)) throw InputError(s.where("target_load") + "target_load must be positive");
    if (!(p.material.E > 0) || !(p.material.nu > -1 && p.material.nu < 0.5))
      throw InputError(s.where("material") + "material needs E > 0 and -1 < nu < 0.5");
    if (p.preset == "grid") {
      if (p.supports.empty() || p.loads.empty())
        throw InputError(s.where("preset") + "preset 'grid' needs 'supports' and 'loads'");
    } else {
      bool known = false;
      for (const auto& n : problem_names()) known |= n == p.preset;
      if (!known) throw InputError(s.where("preset") + "unknown preset '" + p.preset + "'");
      if (!p.supports.empty() || !p.loads.empty())
        throw InputError(s.where("supports") + "'supports'/'loads' are only allowed with preset 'grid'");
    }
    s.finish();
  }
  {
    Section s(top.child("filter"), "filter", origin);
    s.get("r_min", c.optimizer.filter_radius);
    if (!(c.optimizer.filter_radius > 0)) throw InputError(s.where("r_min") + "r_min must be positive");
    s.finish();
  }
  {
    Section s(top.child("optimizer"), "optimizer", origin);
    OptimizationConfig& o = c.optimizer;
    s.require("volume_fraction", o.volume_fraction);
    s.get("lambda_hat", o.lambda_hat);
    s.get("clusters", o.num_clusters);
    s.get("theta", o.theta);
    s.get("move", o.mma_move);
    s.get("max_iterations", o.max_outer);
    s.get("inner_max", o.inner_max);
    s.get("tol_mult", o.tol_mult);
    s.get("continuation", o.schedule.enabled);
    std::string sym = "none";
    s.get("symmetry", sym);
    try {
      o.symmetry = parse_symmetry(sym);
    } catch (const InputError& e) {
      throw InputError(s.where("symmetry") + e.what());
    }
    o.gamma = c.problem.target_load;
    try {
      o.validate();
    } catch (const InputError& e) {
      throw InputError(s.where("volume_fraction") + e.what());
    }
    s.finish();
  }
  {
    Section s(top.child("analysis"), "analysis", origin);
    AnalysisConfig& a = c.analysis;
    s.get("clusters", a.num_clusters);
    s.get("pseudo_mass", a.pseudo_mass);
    s.get("arc_length", a.arc_length);
    s.get("max_points", a.max_points);
    s.get("path_limit", a.path_limit);
    s.get("tau", a.tau);
    s.get("radius_factor", a.radius_factor);
    s.get("threshold", a.threshold);
    s.get("branch_points", a.branch_points);
    s.get("seed", a.seed);
    s.get("workers", a.workers);
    s.get("fd_step", a.fd_step);
    s.get("cdm_tolerance", a.cdm_tolerance);
    if (a.num_clusters < 1) throw InputError(s.where("clusters") + "clusters must be >= 1");
    if (a.max_points < 2) throw InputError(s.where("max_points") + "max_points must be >= 2");
    if (!(a.tau > 0)) throw InputError(s.where("tau") + "tau must be positive");
    if (!(a.radius_factor > 0)) throw InputError(s.where("radius_factor") + "radius_factor must be positive");
    if (!(a.threshold > 0 && a.threshold < 1)) throw InputError(s.where("threshold") + "threshold must be in (0, 1)");
    if (a.workers < 1) throw InputError(s.where("workers") + "workers must be >= 1");
    if (!(a.fd_step > 0)) throw InputError(s.where("fd_step") + "fd_step must be positive");
    if (!(a.path_limit > 0)) throw InputError(s.where("path_limit") + "path_limit must be positive");
    s.finish();
  }
  {
    Section s(top.child("output"), "output", origin);
    OutputConfig& o = c.output;
    s.get("directory", o.directory);
    s.get("snapshot_every", o.snapshot_every);
    if (o.snapshot_every < 0) throw InputError(s.where("snapshot_every") + "snapshot_every must be >= 0");
    if (s.has("formats")) {
      std::vector<std::string> f;
      const std::string w = s.where("formats");
      s.get("formats", f);
      o.csv = o.pgm = false;
      for (const auto& x : f) {
        if (x == "csv") o.csv = true;
        else if (x == "pgm") o.pgm = true;
        else throw InputError(w + "unknown output format '" + x + "'");
      }
    }
    s.finish();
  }
  top.finish();
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot read config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path);
}

Model RunConfig::build_model() const {
  const ProblemConfig& p = problem;
  if (p.preset != "grid")
    return build_problem(p.preset, p.nx, p.ny, p.element_size, p.load, p.material, p.interp);
  auto nodes_of = [&](const BoundarySpec& b) {
    if (!b.edge.empty()) return edge_nodes(b.edge, p.nx, p.ny);
    if (b.i < 0 || b.i > p.nx || b.j < 0 || b.j > p.ny)
      throw InputError("grid vertex (" + std::to_string(b.i) + ", " + std::to_string(b.j) + ") is outside the mesh");
    return std::vector<int>{grid_node(p.nx, b.i, b.j)};
  };
  std::vector<SupportSpec> sup;
  for (const auto& b : p.supports)
    for (int n : nodes_of(b)) {
      if (b.component != 1) sup.push_back({n, 0, b.value});
      if (b.component != 0) sup.push_back({n, 1, b.value});
    }
  std::vector<LoadSpec> loads;
  for (const auto& b : p.loads) {
    const auto ns = nodes_of(b);
    for (int n : ns) loads.push_back({n, b.component, b.value / static_cast<double>(ns.size())});
  }
  return build_grid_mesh(p.nx, p.ny, p.element_size, sup, loads, p.material, p.interp);
}

}  // namespace stabopt
