#include "stabopt/problems.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "stabopt/errors.hpp"

namespace stabopt {

namespace {

void clamp_node(std::vector<SupportSpec>& s, int node) {
  s.push_back({node, 0, 0.0});
  s.push_back({node, 1, 0.0});
}

void spread(std::vector<LoadSpec>& loads, const std::vector<int>& nodes, int comp, double total) {
  for (int n : nodes) loads.push_back({n, comp, total / static_cast<double>(nodes.size())});
}

}  // namespace

Model cantilever_beam(int nx, int ny, double h, double axial_load, double transverse_load,
                      const Material& mat, const InterpolationParams& ip) {
  std::vector<SupportSpec> sup;
  std::vector<LoadSpec> loads;
  std::vector<int> right;
  for (int j = 0; j <= ny; ++j) {
    clamp_node(sup, grid_node(nx, 0, j));
    right.push_back(grid_node(nx, nx, j));
  }
  spread(loads, right, 0, -axial_load);
  if (transverse_load != 0.0) loads.push_back({grid_node(nx, nx, ny / 2), 1, -transverse_load});
  return build_grid_mesh(nx, ny, h, sup, loads, mat, ip);
}

Model double_clamped_beam(int nx, int ny, double h, double load, int load_width,
                          const Material& mat, const InterpolationParams& ip) {
  if (load_width < 1) throw InputError("load width must be positive");
  std::vector<SupportSpec> sup;
  for (int j = 0; j <= ny; ++j) {
    clamp_node(sup, grid_node(nx, 0, j));
    clamp_node(sup, grid_node(nx, nx, j));
  }
  // nodes closest to mid-span, symmetric about it
  std::vector<int> idx(nx + 1);
  for (int i = 0; i <= nx; ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [nx](int a, int b) {
    return std::abs(2 * a - nx) < std::abs(2 * b - nx);
  });
  const int want = std::min(load_width, nx + 1);
  const int cut = std::abs(2 * idx[want - 1] - nx);
  std::vector<int> top;
  for (int i = 0; i <= nx; ++i)
    if (std::abs(2 * i - nx) <= cut) top.push_back(grid_node(nx, i, ny));
  std::vector<LoadSpec> loads;
  spread(loads, top, 1, -load);
  return build_grid_mesh(nx, ny, h, sup, loads, mat, ip);
}

Model symmetric_block(int n, double h, double load, const Material& mat,
                      const InterpolationParams& ip) {
  if (n < 2 || n % 2) throw InputError("symmetric block needs an even element count");
  const int m = n / 2;
  const int left = grid_node(n, 0, m), right = grid_node(n, n, m);
  const int bottom = grid_node(n, m, 0), top = grid_node(n, m, n);
  std::vector<SupportSpec> sup{{left, 1, 0.0}, {right, 1, 0.0}, {bottom, 0, 0.0}, {top, 0, 0.0}};
  std::vector<LoadSpec> loads{{left, 0, load}, {right, 0, -load}, {bottom, 1, load}, {top, 1, -load}};
  return build_grid_mesh(n, n, h, sup, loads, mat, ip);
}

Model pinned_column(int width, int height, double h, double load, const Material& mat,
                    const InterpolationParams& ip) {
  if (width < 2 || width % 2) throw InputError("pinned column needs an even width");
  const int c = width / 2;
  std::vector<SupportSpec> sup;
  clamp_node(sup, grid_node(width, c, 0));
  sup.push_back({grid_node(width, c, height), 0, 0.0});
  std::vector<int> top;
  for (int i = 0; i <= width; ++i) top.push_back(grid_node(width, i, height));
  std::vector<LoadSpec> loads;
  spread(loads, top, 1, -load);
  return build_grid_mesh(width, height, h, sup, loads, mat, ip);
}

Model shallow_arch(int nx, int ny, double span, double thickness, double rise, double load,
                   const Material& mat, const InterpolationParams& ip) {
  if (nx < 2 || nx % 2 || ny < 1 || !(span > 0) || !(thickness > 0))
    throw InputError("invalid shallow arch dimensions");
  std::vector<SupportSpec> sup;
  for (int j = 0; j <= ny; ++j) {
    clamp_node(sup, grid_node(nx, 0, j));
    clamp_node(sup, grid_node(nx, nx, j));
  }
  std::vector<LoadSpec> loads{{grid_node(nx, nx / 2, ny), 1, -load}};
  Model m = build_grid_mesh(nx, ny, 1.0, sup, loads, mat, ip);
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i) {
      const double x = span * i / nx;
      m.coords[grid_node(nx, i, j)] = {x, thickness * j / ny + rise * std::sin(M_PI * x / span)};
    }
  m.grid = {};
  m.finalize();
  return m;
}

EmbeddedColumn embedded_column(int domain_nx, int column_width, int column_height, int void_top,
                               double h, double load, const Material& mat,
                               const InterpolationParams& ip) {
  if (column_width < 1 || column_width > domain_nx || column_height < 1 || void_top < 0)
    throw InputError("invalid embedded column dimensions");
  const int nx = domain_nx, ny = column_height + void_top;
  const int i0 = (domain_nx - column_width) / 2;
  std::vector<SupportSpec> sup;
  std::vector<int> top;
  for (int i = i0; i <= i0 + column_width; ++i) {
    clamp_node(sup, grid_node(nx, i, 0));
    top.push_back(grid_node(nx, i, column_height));
  }
  std::vector<LoadSpec> loads;
  spread(loads, top, 1, -load);
  EmbeddedColumn out;
  out.fictitious = build_grid_mesh(nx, ny, h, sup, loads, mat, ip);
  for (int j = 0; j < column_height; ++j)
    for (int i = i0; i < i0 + column_width; ++i) out.column.push_back(j * nx + i);
  out.conforming = extract_submesh(out.fictitious, out.column);
  std::set<int> col(out.column.begin(), out.column.end());
  const Model& f = out.fictitious;
  for (int n = 0; n < f.num_nodes(); ++n) {
    bool touches = false;
    for (int e : f.node_elements[n]) touches = touches || col.count(e);
    if (!touches) {
      out.void_only_dofs.push_back(2 * n);
      out.void_only_dofs.push_back(2 * n + 1);
    }
  }
  return out;
}

std::vector<double> banded_density(const EmbeddedColumn& col, const std::vector<double>& bands,
                                   double background) {
  const Model& f = col.fictitious;
  const int nx = f.grid.nx;
  int imin = nx, imax = -1, jmax = -1;
  for (int e : col.column) {
    imin = std::min(imin, e % nx);
    imax = std::max(imax, e % nx);
    jmax = std::max(jmax, e / nx);
  }
  std::vector<double> rho(f.num_elements(), background);
  for (int e = 0; e < f.num_elements(); ++e) {
    const int i = e % nx, j = e / nx;
    const int dx = std::max({0, imin - i, i - imax});
    const int dy = std::max(0, j - jmax);
    const int d = std::max(dx, dy);
    if (d == 0)
      rho[e] = 1.0;
    else if (d <= static_cast<int>(bands.size()))
      rho[e] = bands[d - 1];
  }
  return rho;
}

std::vector<std::string> problem_names() {
  return {"cantilever", "double-clamped-beam", "symmetric-block", "pinned-column"};
}

Model build_problem(const std::string& name, int nx, int ny, double h, double load,
                    const Material& mat, const InterpolationParams& ip) {
  if (name == "cantilever") return cantilever_beam(nx, ny, h, load, 0.01 * load, mat, ip);
  if (name == "double-clamped-beam") return double_clamped_beam(nx, ny, h, load, 3, mat, ip);
  if (name == "symmetric-block") {
    if (nx != ny) throw InputError("symmetric-block needs nx == ny");
    return symmetric_block(nx, h, load, mat, ip);
  }
  if (name == "pinned-column") return pinned_column(nx, ny, h, load, mat, ip);
  throw InputError("unknown problem '" + name + "'");
}

}  // namespace stabopt
