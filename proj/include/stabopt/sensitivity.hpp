#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "stabopt/fem.hpp"
#include "stabopt/linear_solver.hpp"
#include "stabopt/model.hpp"
#include "stabopt/stability.hpp"

namespace stabopt {

// Element-wise pieces of d(phi_s^T K phi_k - lambda phi_s^T S phi_k)/drho
// along the equilibrium path.
struct PairTerms {
  Vec stiffness;  // explicit d(phi_s^T K phi_k)/drho at fixed u
  Vec mass;       // d(phi_s^T S phi_k)/drho
  Vec adjoint;    // eta^T dR/drho
  Vec adjoint_vector;
  double lambda = 0;

  Vec total() const { return stiffness - lambda * mass + adjoint; }
};

// Direction vectors of one eigenvalue cluster; z(s,k) == z(k,s).
struct ClusterSensitivity {
  int begin = 0;
  int size = 0;
  double lambda = 0;            // cluster mean
  std::vector<Vec> z;           // packed upper triangle, s <= k
  std::vector<Vec> adjoint;     // matching adjoint vectors

  static int index(int s, int k, int n);
  const Vec& zsk(int s, int k) const { return z[index(s, k, size)]; }
};

struct DirectionalIncrements {
  Eigen::MatrixXd T;
  Vec increments;  // ascending eigenvalues of T
};

DirectionalIncrements directional_increments(const ClusterSensitivity& c, const Vec& drho);

// Scale factors applied to individual kernels; only used to exercise the
// verification harness with a deliberately wrong gradient.
struct KernelFault {
  std::string kernel;  // "", "compliance", "stiffness", "mass", "adjoint"
  double factor = 1.01;
};

// Sensitivities at one converged equilibrium state.
class SensitivityContext {
 public:
  SensitivityContext(const Model& model, const Vec& rho, const Interpolation& ip, const Vec& u,
                     double gamma, const PseudoMassParams& mass = {}, bool use_pseudo_mass = true);

  void set_fault(const KernelFault& f) { fault_ = f; }
  const Assembler& assembler() const { return asmb_; }
  const SpMat& tangent() const { return K_; }

  double compliance() const;
  Vec compliance_gradient() const;

  PairTerms pair_terms(const Vec& phi_s, const Vec& phi_k, double lambda) const;
  Vec simple_eigenvalue_gradient(const Vec& phi, double lambda) const;
  ClusterSensitivity cluster_direction_vectors(const EigenSolution& eig, int cluster) const;

 private:
  void scale(const char* kernel, Vec& v) const;

  const Model& model_;
  Vec rho_;
  Interpolation ip_;
  Vec u_;
  double gamma_;
  PseudoMass mass_;
  bool use_mass_;
  Assembler asmb_;
  SpMat K_;
  SymmetricSolver solver_;
  std::vector<Vec8> dR_;  // element columns of dR/drho
  KernelFault fault_;
};

struct SensitivityBundle {
  double compliance = 0;
  Vec compliance_gradient;
  std::vector<ClusterSensitivity> clusters;
};

SensitivityBundle compute_sensitivities(const SensitivityContext& ctx, const EigenSolution& eig);

struct CdmOptions {
  double h = 1e-5;
  AnalysisOptions analysis;     // num_clusters sets the eigenvalue window
  std::vector<int> elements;    // empty: all
  int workers = 1;
  KernelFault fault;
  double denominator_floor = 1e-3;  // relative to the largest |CDM| entry
};

struct CdmQuantity {
  std::string name;
  Vec adjoint;
  Vec cdm;
  Vec rel_error;
  double max_rel = 0;
  int worst_element = -1;
};

struct CdmReport {
  double h = 0;
  std::vector<int> elements;
  std::vector<int> excluded;
  std::vector<CdmQuantity> quantities;
  bool all_simple = true;
  double max_rel = 0;
  std::string worst_quantity;
};

CdmReport verify_sensitivities_cdm(const Model& model, const Vec& rho, double gamma,
                                   const Interpolation& ip, const CdmOptions& opts);

struct FirstOrderReport {
  double lambda = 0;
  int multiplicity = 0;
  Eigen::MatrixXd T;
  Vec increments;
  std::vector<double> eps;
  std::vector<double> residual;
  std::vector<Vec> perturbed;
  double slope = 0;
};

// Compare re-solved cluster eigenvalues at rho + eps*drho with the
// first-order prediction lambda + eps*increment.
FirstOrderReport first_order_multi_eig_check(const Model& model, const Vec& rho, double gamma,
                                             const Interpolation& ip, int cluster,
                                             const Vec& drho, const std::vector<double>& eps,
                                             const AnalysisOptions& opts);

double fitted_log_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace stabopt
