#pragma once

#include <array>
#include <functional>
#include <vector>

#include "stabopt/linear_solver.hpp"
#include "stabopt/material.hpp"
#include "stabopt/model.hpp"

namespace stabopt {

using Vec8 = Eigen::Matrix<double, 8, 1>;
using Mat8 = Eigen::Matrix<double, 8, 8>;
using GradB = Eigen::Matrix<double, 4, 8>;    // u_e -> displacement gradient (2i+j)
using StrainB = Eigen::Matrix<double, 3, 8>;  // u_e -> [e11, e22, 2 e12]

// Current interpolation state: penalization powers and energy-weight cutoff.
struct Interpolation {
  double p = 3.0;
  double p_lin = 6.0;
  double eps = 1e-8;
  double beta = 120.0;
  double c = 0.08;

  static Interpolation from(const InterpolationParams& ip) {
    return {ip.p, ip.p_lin, ip.eps, ip.beta, ip.c0};
  }
};

struct ElementProperties {
  Moduli nl;        // finite-strain branch
  Moduli dnl;       // d/drho of nl
  Eigen::Matrix3d C;   // small-strain branch
  Eigen::Matrix3d dC;  // d/drho of C
  double eta = 1.0;
  double deta = 0.0;
};

ElementProperties interpolate_properties(double rho, const Material& mat, const Interpolation& ip);

struct GaussPoint {
  GradB B;
  StrainB BL;
  double weight = 0;  // quadrature weight * detJ * thickness
};

using ElementGeometry = std::array<GaussPoint, 4>;

ElementGeometry element_geometry(const std::array<std::array<double, 2>, 4>& X, double thickness);

struct GaussState {
  Eigen::Vector4d H;  // displacement gradient
  Mat3 F;             // interpolated, embedded
  Mat3 P;
  Tangent2 A;
};

struct ElementKernelOutput {
  Vec8 f;
  Mat8 k;
  std::array<GaussState, 4> gauss;
};

// Throws SingularConfigurationError if an interpolated F inverts.
ElementKernelOutput element_force_and_tangent(const ElementGeometry& geo, const Vec8& ue,
                                              const ElementProperties& props,
                                              bool with_tangent = true);

// d f_e / d rho_e at fixed displacement.
Vec8 element_density_derivative(const ElementGeometry& geo, const Vec8& ue,
                                 const ElementProperties& props);

struct AssembledSystem {
  Vec residual;
  SpMat tangent;
};

class Assembler {
 public:
  explicit Assembler(const Model& model);

  const Model& model() const { return *model_; }
  const ElementGeometry& geometry(int e) const { return geo_[e]; }
  Vec8 gather(const Vec& u, int e) const;

  // R = F_int(u) - gamma * load, zero on fixed dofs; K with fixed rows and
  // columns replaced by the identity. Either output may be null.
  void assemble(const Vec& u, const Vec& rho, const Interpolation& ip, double gamma, Vec* R,
                SpMat* K) const;
  Vec internal_force(const Vec& u, const Vec& rho, const Interpolation& ip) const;

  // Column e of dR/drho, restricted to the element dofs; fixed dofs zeroed.
  std::vector<Vec8> density_derivatives(const Vec& u, const Vec& rho, const Interpolation& ip) const;
  SpMat density_derivative_matrix(const Vec& u, const Vec& rho, const Interpolation& ip) const;

  // Zero the fixed entries of a global vector in place.
  void zero_fixed(Vec& v) const;

 private:
  const Model* model_;
  std::vector<ElementGeometry> geo_;
  SpMat pattern_;
  std::vector<std::array<int, 64>> slot_;  // value index of (a,b) in pattern_, -1 if eliminated
  std::vector<int> fixed_diag_slot_;
};

AssembledSystem assemble(const Model& model, const Vec& u, const Vec& rho, const Interpolation& ip,
                         double gamma);
SpMat residual_density_derivative(const Model& model, const Vec& u, const Vec& rho,
                                  const Interpolation& ip);

struct SolverOptions {
  int max_newton_iter = 30;
  double tolerance = 1e-12;            // energy ratio per increment
  double min_increment_ratio = 1.0 / 64.0;
  double initial_increment = 1.0;      // fraction of the target load
  bool adapt_cutoff = true;
  int max_increments = 100000;
  int polish_iterations = 0;           // extra Newton steps after convergence
};

struct ConvergenceRecord {
  int increments = 0;
  int iterations = 0;
  int cutoff_updates = 0;
  double final_energy_ratio = 0.0;
  double residual_norm = 0.0;
  std::vector<double> last_energy_ratios;  // last increment, per iteration
  double initial_increment_used = 1.0;
};

struct EquilibriumState {
  Vec u;
  double gamma = 0.0;
  double c = 0.08;
  ConvergenceRecord record;
};

// Load-controlled Newton-Raphson with increment halving and adaptive cutoff.
// `ip.c` is the starting cutoff; `u0` optionally warm-starts the first
// increment (it is then applied in one step to the target).
EquilibriumState solve_equilibrium(const Model& model, const Vec& rho, double gamma_target,
                                   const Interpolation& ip, const SolverOptions& opts = {},
                                   const Vec* u0 = nullptr);

// One Newton solve at fixed load from a given start; used by the path
// tracers and warm-started re-analyses. Returns false without throwing on
// non-convergence.
bool newton_fixed_load(const Assembler& asmb, SymmetricSolver& solver, const Vec& rho,
                       const Interpolation& ip, double gamma, Vec& u, const SolverOptions& opts,
                       ConvergenceRecord* rec);

// Set fixed dofs of u to gamma times their prescribed values.
void apply_prescribed(const Model& model, double gamma, Vec& u);

}  // namespace stabopt
