#pragma once

#include <Eigen/Core>
#include <limits>
#include <vector>

#include "stabopt/fem.hpp"
#include "stabopt/model.hpp"

namespace stabopt {

struct PseudoMassParams {
  double q = 15.0;
  double eps_hat = 1e-9;
  double p_m = 6.0;
  double w_low = 0.1;
  double w_high = 0.2;
};

// Nodal pseudo-mass as a function of nodal pseudo-density: power law below
// w_low, C1 cubic bridge, 1 above w_high.
class PseudoMass {
 public:
  explicit PseudoMass(const PseudoMassParams& params);
  const PseudoMassParams& params() const { return p_; }
  const Eigen::Vector4d& coefficients() const { return a_; }
  double value(double w) const;
  double derivative(double w) const;

 private:
  PseudoMassParams p_;
  Eigen::Vector4d a_;
};

double pseudo_mass_value(double w, const PseudoMassParams& params);

// p-norm of adjacent element densities per node.
Vec nodal_pseudo_density(const Vec& rho, const Model& model, double q);

// Diagonal of the pseudo-mass matrix (one entry per dof); fixed dofs get 1.
Vec assemble_pseudo_mass(const Model& model, const Vec& rho, const PseudoMassParams& params);

struct Cluster {
  int begin = 0;
  int size = 0;
};

struct EigenSolution {
  Vec values;                  // ascending, covering the requested clusters
  Eigen::MatrixXd vectors;     // S-orthonormal columns, zero on fixed dofs
  std::vector<Cluster> clusters;
  double tol = 1e-8;
  double next_value = std::numeric_limits<double>::quiet_NaN();  // first value past the last cluster
  double shift = 0.0;
  int basis_size = 0;

  int count() const { return static_cast<int>(values.size()); }
  bool all_simple() const;
};

struct EigenOptions {
  const std::vector<char>* fixed = nullptr;  // dofs excluded from the problem
  int dense_threshold = 400;                 // free dofs at or below: full spectrum
  int block_size = 4;
  int max_basis = 800;
  int dense_fallback = 5000;                 // free dofs at or below: dense solve if the basis runs out
  double residual_tol = 1e-11;
  unsigned seed = 20240611u;
};

std::vector<Cluster> cluster_eigenvalues(const Vec& values, double tol);

// Lowest eigenpairs of (K - lambda S) phi = 0 covering m clusters.
EigenSolution eigen_lowest(const SpMat& K, const Vec& S, int m, double tol_mult,
                           const EigenOptions& opts = {});

enum class CriticalKind { Bifurcation, Limit };
const char* to_string(CriticalKind k);

CriticalKind classify_critical_point(const Vec& phi, const Vec& load, double tol);

struct AnalysisOptions {
  int num_clusters = 6;
  double tol_mult = 1e-8;
  bool use_pseudo_mass = true;  // false: identity mass
  PseudoMassParams mass;
  SolverOptions solver;
  EigenOptions eigen;
};

struct StabilityAnalysis {
  EquilibriumState state;
  Interpolation ip;  // with the cutoff reached by the solve
  SpMat tangent;
  Vec mass;
  EigenSolution eig;
};

// Equilibrium at gamma followed by the tangent eigenproblem at that state.
StabilityAnalysis analyze_stability(const Model& model, const Vec& rho, double gamma,
                                    const Interpolation& ip, const AnalysisOptions& opts = {},
                                    const Vec* u0 = nullptr);

// Eigenproblem only, at a given state.
EigenSolution eigen_at_state(const Model& model, const Vec& rho, const Interpolation& ip,
                             const Vec& u, double gamma, const AnalysisOptions& opts,
                             SpMat* tangent = nullptr, Vec* mass = nullptr);

// Fix the sign so that the largest-magnitude entry is positive.
void normalize_sign(Eigen::Ref<Vec> v);

}  // namespace stabopt
