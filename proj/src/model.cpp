#include "stabopt/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "stabopt/errors.hpp"

namespace stabopt {

namespace {

double reference_jacobian(const Model& m, int e, double xi, double eta) {
  static const double sx[4] = {-1, 1, 1, -1};
  static const double sy[4] = {-1, -1, 1, 1};
  double j00 = 0, j01 = 0, j10 = 0, j11 = 0;
  for (int a = 0; a < 4; ++a) {
    const auto& X = m.coords[m.elements[e][a]];
    double dxi = 0.25 * sx[a] * (1 + sy[a] * eta);
    double deta = 0.25 * sy[a] * (1 + sx[a] * xi);
    j00 += X[0] * dxi;
    j01 += X[0] * deta;
    j10 += X[1] * dxi;
    j11 += X[1] * deta;
  }
  return j00 * j11 - j01 * j10;
}

}  // namespace

double Model::total_volume() const {
  double v = 0;
  for (double x : volume) v += x;
  return v;
}

std::array<double, 2> Model::centroid(int e) const {
  std::array<double, 2> c{0, 0};
  for (int n : elements[e]) {
    c[0] += 0.25 * coords[n][0];
    c[1] += 0.25 * coords[n][1];
  }
  return c;
}

std::array<int, 8> Model::element_dofs(int e) const {
  std::array<int, 8> d{};
  for (int a = 0; a < 4; ++a) {
    d[2 * a] = 2 * elements[e][a];
    d[2 * a + 1] = 2 * elements[e][a] + 1;
  }
  return d;
}

bool Model::has_nonzero_prescribed() const {
  for (const auto& f : fixed)
    if (f.value != 0.0) return true;
  return false;
}

void Model::finalize() {
  const int nn = num_nodes();
  const int ne = num_elements();
  if (nn == 0 || ne == 0) throw InputError("model has no nodes or elements");
  const double g = 1.0 / std::sqrt(3.0);
  volume.assign(ne, 0.0);
  node_elements.assign(nn, {});
  for (int e = 0; e < ne; ++e) {
    const auto& en = elements[e];
    for (int a = 0; a < 4; ++a) {
      if (en[a] < 0 || en[a] >= nn)
        throw InputError("element " + std::to_string(e) + " references missing node");
      for (int b = 0; b < a; ++b)
        if (en[a] == en[b])
          throw InputError("element " + std::to_string(e) + " has repeated nodes");
    }
    double v = 0;
    for (double xi : {-g, g})
      for (double eta : {-g, g}) {
        double dj = reference_jacobian(*this, e, xi, eta);
        if (dj <= 0)
          throw InputError("element " + std::to_string(e) + " has nonpositive Jacobian");
        v += dj;
      }
    volume[e] = v * thickness;
    for (int a = 0; a < 4; ++a) node_elements[en[a]].push_back(e);
  }
  if (cell.empty()) {
    cell.resize(ne);
    for (int e = 0; e < ne; ++e) cell[e] = e;
  }
  dof_fixed.assign(num_dofs(), 0);
  std::sort(fixed.begin(), fixed.end(),
            [](const FixedDof& a, const FixedDof& b) { return a.dof < b.dof; });
  std::vector<FixedDof> unique;
  for (const auto& f : fixed) {
    if (f.dof < 0 || f.dof >= num_dofs()) throw InputError("support dof out of range");
    if (!unique.empty() && unique.back().dof == f.dof) {
      if (unique.back().value != f.value)
        throw InputError("conflicting prescribed values on dof " + std::to_string(f.dof));
      continue;
    }
    unique.push_back(f);
    dof_fixed[f.dof] = 1;
  }
  fixed = std::move(unique);
  if (load.size() != num_dofs()) throw InputError("load vector size mismatch");
  for (int d = 0; d < num_dofs(); ++d)
    if (dof_fixed[d]) load[d] = 0.0;
}

Model build_grid_mesh(int nx, int ny, double elem_size,
                      const std::vector<SupportSpec>& supports,
                      const std::vector<LoadSpec>& loads,
                      const Material& material,
                      const InterpolationParams& interp) {
  if (nx < 1 || ny < 1) throw InputError("mesh needs nx, ny >= 1");
  if (!(elem_size > 0)) throw InputError("elem_size must be positive");
  Model m;
  m.grid = {nx, ny, elem_size};
  m.material = material;
  m.interp = interp;
  m.coords.reserve((nx + 1) * (ny + 1));
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) m.coords.push_back({i * elem_size, j * elem_size});
  m.elements.reserve(nx * ny);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      int n0 = grid_node(nx, i, j);
      m.elements.push_back({n0, n0 + 1, n0 + nx + 2, n0 + nx + 1});
    }
  const int nn = m.num_nodes();
  for (const auto& s : supports) {
    if (s.node < 0 || s.node >= nn)
      throw InputError("support node " + std::to_string(s.node) + " out of range");
    if (s.component < 0 || s.component > 1) throw InputError("support component must be 0 or 1");
    m.fixed.push_back({2 * s.node + s.component, s.value});
  }
  m.load = Vec::Zero(2 * nn);
  for (const auto& l : loads) {
    if (l.node < 0 || l.node >= nn)
      throw InputError("load node " + std::to_string(l.node) + " out of range");
    if (l.component < 0 || l.component > 1) throw InputError("load component must be 0 or 1");
    m.load[2 * l.node + l.component] += l.magnitude;
  }
  m.finalize();
  return m;
}

Model extract_submesh(const Model& parent, const std::vector<int>& keep) {
  if (keep.empty()) throw InputError("submesh has no elements");
  std::map<int, int> node_map;
  for (int e : keep) {
    if (e < 0 || e >= parent.num_elements()) throw InputError("submesh element out of range");
    for (int n : parent.elements[e]) node_map.emplace(n, 0);
  }
  int next = 0;
  for (auto& [old_id, new_id] : node_map) new_id = next++;

  Model m;
  m.material = parent.material;
  m.interp = parent.interp;
  m.thickness = parent.thickness;
  m.grid = parent.grid;
  m.coords.resize(node_map.size());
  for (const auto& [old_id, new_id] : node_map) m.coords[new_id] = parent.coords[old_id];
  for (int e : keep) {
    std::array<int, 4> en{};
    for (int a = 0; a < 4; ++a) en[a] = node_map.at(parent.elements[e][a]);
    m.elements.push_back(en);
    m.cell.push_back(parent.cell.empty() ? e : parent.cell[e]);
  }
  for (const auto& f : parent.fixed) {
    auto it = node_map.find(f.dof / 2);
    if (it == node_map.end())
      throw InputError("support on node " + std::to_string(f.dof / 2) + " lies outside the solid region");
    m.fixed.push_back({2 * it->second + f.dof % 2, f.value});
  }
  m.load = Vec::Zero(2 * m.num_nodes());
  for (int d = 0; d < parent.num_dofs(); ++d) {
    if (parent.load[d] == 0.0) continue;
    auto it = node_map.find(d / 2);
    if (it == node_map.end())
      throw InputError("load on node " + std::to_string(d / 2) + " lies outside the solid region");
    m.load[2 * it->second + d % 2] = parent.load[d];
  }
  m.finalize();
  return m;
}

Symmetry parse_symmetry(const std::string& name) {
  if (name == "none") return Symmetry::None;
  if (name == "half-x") return Symmetry::HalfX;
  if (name == "quarter") return Symmetry::Quarter;
  if (name == "eighth") return Symmetry::Eighth;
  throw InputError("unknown symmetry '" + name + "' (none, half-x, quarter, eighth)");
}

std::string to_string(Symmetry s) {
  switch (s) {
    case Symmetry::None: return "none";
    case Symmetry::HalfX: return "half-x";
    case Symmetry::Quarter: return "quarter";
    case Symmetry::Eighth: return "eighth";
  }
  return "none";
}

SymmetryMap::SymmetryMap(const Model& model, Symmetry sym) : kind_(sym) {
  const int ne = model.num_elements();
  orbit_of_.assign(ne, -1);
  if (sym == Symmetry::None) {
    orbits_.resize(ne);
    for (int e = 0; e < ne; ++e) {
      orbits_[e] = {e};
      orbit_of_[e] = e;
    }
    return;
  }
  const int nx = model.grid.nx, ny = model.grid.ny;
  if (nx * ny != ne) throw InputError("symmetry requires the full structured grid");
  if (sym == Symmetry::Eighth && nx != ny)
    throw InputError("eighth symmetry requires a square grid (nx == ny)");

  using Cell = std::pair<int, int>;
  std::vector<Cell (*)(Cell, int, int)> ops;
  ops.push_back([](Cell c, int, int) { return c; });
  ops.push_back([](Cell c, int nx_, int) { return Cell{nx_ - 1 - c.first, c.second}; });
  if (sym != Symmetry::HalfX) {
    ops.push_back([](Cell c, int, int ny_) { return Cell{c.first, ny_ - 1 - c.second}; });
    ops.push_back([](Cell c, int nx_, int ny_) { return Cell{nx_ - 1 - c.first, ny_ - 1 - c.second}; });
  }
  if (sym == Symmetry::Eighth) {
    // Transpose composed with the four reflections gives the rest of D4.
    ops.push_back([](Cell c, int, int) { return Cell{c.second, c.first}; });
    ops.push_back([](Cell c, int nx_, int) { return Cell{nx_ - 1 - c.second, c.first}; });
    ops.push_back([](Cell c, int, int ny_) { return Cell{c.second, ny_ - 1 - c.first}; });
    ops.push_back([](Cell c, int nx_, int ny_) { return Cell{nx_ - 1 - c.second, ny_ - 1 - c.first}; });
  }
  for (int e = 0; e < ne; ++e) {
    if (orbit_of_[e] >= 0) continue;
    Cell c{e % nx, e / nx};
    std::set<int> members;
    for (auto op : ops) {
      Cell t = op(c, nx, ny);
      members.insert(t.second * nx + t.first);
    }
    const int id = static_cast<int>(orbits_.size());
    orbits_.emplace_back(members.begin(), members.end());
    for (int k : members) orbit_of_[k] = id;
  }
}

Vec SymmetryMap::expand(const Vec& reduced) const {
  if (reduced.size() != reduced_size()) throw InputError("reduced design size mismatch");
  Vec full(full_size());
  for (int e = 0; e < full_size(); ++e) full[e] = reduced[orbit_of_[e]];
  return full;
}

Vec SymmetryMap::restrict_average(const Vec& full) const {
  Vec r = Vec::Zero(reduced_size());
  for (int o = 0; o < reduced_size(); ++o) {
    for (int e : orbits_[o]) r[o] += full[e];
    r[o] /= static_cast<double>(orbits_[o].size());
  }
  return r;
}

Vec SymmetryMap::reduce_gradient(const Vec& full) const {
  Vec r = Vec::Zero(reduced_size());
  for (int e = 0; e < full_size(); ++e) r[orbit_of_[e]] += full[e];
  return r;
}

SpMatRow build_filter(const Model& model, double r_min) {
  if (!(r_min > 0)) throw InputError("filter radius must be positive");
  const int ne = model.num_elements();
  std::vector<std::array<double, 2>> xc(ne);
  for (int e = 0; e < ne; ++e) xc[e] = model.centroid(e);

  // Bucket centroids on a coarse grid of cell size r_min.
  std::map<std::pair<long, long>, std::vector<int>> buckets;
  auto key = [&](const std::array<double, 2>& p) {
    return std::pair<long, long>{static_cast<long>(std::floor(p[0] / r_min)),
                                 static_cast<long>(std::floor(p[1] / r_min))};
  };
  for (int e = 0; e < ne; ++e) buckets[key(xc[e])].push_back(e);

  std::vector<Eigen::Triplet<double>> trip;
  for (int p = 0; p < ne; ++p) {
    auto k = key(xc[p]);
    std::vector<std::pair<int, double>> row;
    double sum = 0;
    for (long bi = k.first - 1; bi <= k.first + 1; ++bi)
      for (long bj = k.second - 1; bj <= k.second + 1; ++bj) {
        auto it = buckets.find({bi, bj});
        if (it == buckets.end()) continue;
        for (int q : it->second) {
          double d = std::hypot(xc[p][0] - xc[q][0], xc[p][1] - xc[q][1]);
          double w = r_min - d;
          if (w <= 0) continue;
          w *= model.volume[q];
          row.emplace_back(q, w);
          sum += w;
        }
      }
    for (auto& [q, w] : row) trip.emplace_back(p, q, w / sum);
  }
  SpMatRow W(ne, ne);
  W.setFromTriplets(trip.begin(), trip.end());
  W.makeCompressed();
  return W;
}

Vec apply_filter(const SpMatRow& W, const Vec& x) {
  if (W.cols() != x.size()) throw InputError("filter/design size mismatch");
  return W * x;
}

DesignSpace::DesignSpace(const Model& model, Symmetry sym, double r_min)
    : symmetry(model, sym), filter(build_filter(model, r_min)) {}

Vec DesignSpace::densities(const Vec& x) const { return filter * symmetry.expand(x); }

Vec DesignSpace::chain_gradient(const Vec& drho) const {
  Vec g = filter.transpose() * drho;
  return symmetry.reduce_gradient(g);
}

double volume_constraint(const Vec& rho, const Model& model, double vf) {
  if (!(vf > 0 && vf <= 1)) throw InputError("volume fraction must lie in (0, 1]");
  double v = 0;
  for (int e = 0; e < model.num_elements(); ++e) v += rho[e] * model.volume[e];
  return v / (model.total_volume() * vf) - 1.0;
}

Vec volume_constraint_gradient(const Model& model, double vf) {
  Vec g(model.num_elements());
  const double s = 1.0 / (model.total_volume() * vf);
  for (int e = 0; e < model.num_elements(); ++e) g[e] = model.volume[e] * s;
  return g;
}

}  // namespace stabopt
