#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <array>
#include <string>
#include <vector>

namespace stabopt {

using Vec = Eigen::VectorXd;
using SpMat = Eigen::SparseMatrix<double>;
using SpMatRow = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct Material {
  double E = 1.0;
  double nu = 0.3;
};

// Constants of the stiffness and energy interpolation; c0/dc drive the
// adaptive cutoff of the energy weight.
struct InterpolationParams {
  double p = 3.0;
  double p_lin = 6.0;
  double eps = 1e-8;
  double beta = 120.0;
  double c0 = 0.08;
  double dc = 0.05;
};

// Component 0 = x, 1 = y.
struct SupportSpec {
  int node = 0;
  int component = 0;
  double value = 0.0;
};

struct LoadSpec {
  int node = 0;
  int component = 0;
  double magnitude = 0.0;
};

struct FixedDof {
  int dof = 0;
  double value = 0.0;
};

struct GridInfo {
  int nx = 0;
  int ny = 0;
  double elem_size = 0.0;
};

struct Model {
  std::vector<std::array<double, 2>> coords;
  std::vector<std::array<int, 4>> elements;  // counterclockwise
  std::vector<FixedDof> fixed;
  Vec load;  // reference load pattern, zero on fixed dofs
  Material material;
  InterpolationParams interp;
  double thickness = 1.0;

  // Structured-grid metadata. For a thresholded submesh `cell` maps each
  // element back to its cell index j*nx+i in the parent grid.
  GridInfo grid;
  std::vector<int> cell;

  // Derived by finalize().
  std::vector<double> volume;
  std::vector<std::vector<int>> node_elements;
  std::vector<char> dof_fixed;

  int num_nodes() const { return static_cast<int>(coords.size()); }
  int num_elements() const { return static_cast<int>(elements.size()); }
  int num_dofs() const { return 2 * num_nodes(); }
  double total_volume() const;
  std::array<double, 2> centroid(int e) const;
  std::array<int, 8> element_dofs(int e) const;
  bool has_nonzero_prescribed() const;

  // Validates connectivity and geometry, builds adjacency and dof masks.
  void finalize();
};

Model build_grid_mesh(int nx, int ny, double elem_size,
                      const std::vector<SupportSpec>& supports,
                      const std::vector<LoadSpec>& loads,
                      const Material& material = {},
                      const InterpolationParams& interp = {});

// Node id of grid vertex (i, j) for an nx-by-ny grid.
inline int grid_node(int nx, int i, int j) { return j * (nx + 1) + i; }

// Element subset of a grid model, with unused nodes dropped. Supports and
// loads are carried over; they must sit on retained nodes.
Model extract_submesh(const Model& parent, const std::vector<int>& keep);

enum class Symmetry { None, HalfX, Quarter, Eighth };

Symmetry parse_symmetry(const std::string& name);
std::string to_string(Symmetry s);

// Maps a reduced design vector (one entry per orbit of the grid cells under
// the chosen reflections) to the full element vector and back.
class SymmetryMap {
 public:
  SymmetryMap() = default;
  SymmetryMap(const Model& model, Symmetry sym);

  Symmetry kind() const { return kind_; }
  int reduced_size() const { return static_cast<int>(orbits_.size()); }
  int full_size() const { return static_cast<int>(orbit_of_.size()); }
  const std::vector<std::vector<int>>& orbits() const { return orbits_; }
  const std::vector<int>& orbit_of() const { return orbit_of_; }

  Vec expand(const Vec& reduced) const;
  // Orbit average; inverse of expand on symmetric vectors.
  Vec restrict_average(const Vec& full) const;
  // Adjoint of expand: sums each orbit.
  Vec reduce_gradient(const Vec& full) const;

 private:
  Symmetry kind_ = Symmetry::None;
  std::vector<std::vector<int>> orbits_;
  std::vector<int> orbit_of_;
};

SpMatRow build_filter(const Model& model, double r_min);
Vec apply_filter(const SpMatRow& W, const Vec& x);

// Design variables -> element densities through symmetry and filter.
struct DesignSpace {
  SymmetryMap symmetry;
  SpMatRow filter;

  DesignSpace() = default;
  DesignSpace(const Model& model, Symmetry sym, double r_min);

  int size() const { return symmetry.reduced_size(); }
  Vec densities(const Vec& x) const;
  Vec increment(const Vec& dx) const { return densities(dx); }
  Vec chain_gradient(const Vec& drho) const;
};

double volume_constraint(const Vec& rho, const Model& model, double vf);
Vec volume_constraint_gradient(const Model& model, double vf);

}  // namespace stabopt
