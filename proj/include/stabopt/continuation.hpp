#pragma once

#include <string>
#include <vector>

#include "stabopt/fem.hpp"
#include "stabopt/linear_solver.hpp"
#include "stabopt/model.hpp"
#include "stabopt/stability.hpp"

namespace stabopt {

struct PathOptions {
  double arc_length = 0.0;   // ell; <= 0 picks one from the linear response
  int max_points = 200;
  double gamma_max = 1e300;  // stop once the load factor passes this
  double min_arc_ratio = 1.0 / 64.0;
  int max_corrector = 30;
  double tolerance = 1e-10;  // ||R|| / ||P||
  int num_eigenvalues = 1;   // lowest values recorded per point; crossings of
                             // any of them are located
  bool use_pseudo_mass = false;  // false: identity mass (solid designs)
  PseudoMassParams mass;
  EigenOptions eigen;
  double critical_tol = 1e-8;  // |lambda| relative to the tangent scale
  double bifurcation_tol = 1e-6;
  int monitor_dof = -1;        // -1: dof of the largest load component
  bool detect_criticals = true;
};

struct PathPoint {
  Vec u;
  double gamma = 0.0;
  std::vector<double> eigenvalues;  // ascending
  bool stable = true;
  double constraint_residual = 0.0;  // |du'du - ell^2| / ell^2 of the step into this point
};

struct CriticalPoint {
  double gamma = 0.0;
  Vec u;
  Vec phi;  // unit norm
  Eigen::MatrixXd modes;  // unit columns of the (near-)zero cluster
  int index = 0;          // position of the crossing eigenvalue, ascending
  int multiplicity = 1;
  double lambda = 0.0;
  CriticalKind kind = CriticalKind::Limit;
  double load_alignment = 0.0;  // |phi'P| / (|phi| |P|)
  int segment = 0;              // between points segment and segment+1
};

struct EquilibriumPath {
  int branch_id = 0;
  int parent = -1;
  std::vector<PathPoint> points;
  std::vector<CriticalPoint> criticals;
  double arc_length = 0.0;
  int monitor_dof = 0;
  bool complete = true;
  std::string diagnostic;
};

// Newton-based path machinery on a fixed density field.
class PathTracer {
 public:
  PathTracer(const Model& model, const Vec& rho, const Interpolation& ip, const PathOptions& opts);

  const Model& model() const { return *model_; }
  const PathOptions& options() const { return opts_; }
  double load_norm() const { return load_norm_; }
  double tangent_scale() const { return k_scale_; }

  // R = F_int(u) - gamma P - gamma_s Ps.
  Vec residual(const Vec& u, double gamma, const Vec* Ps = nullptr, double gamma_s = 0.0) const;
  double residual_norm(const Vec& u, double gamma) const { return residual(u, gamma).norm() / load_norm_; }
  SpMat tangent(const Vec& u) const;
  EigenSolution eigen(const Vec& u, int count) const;

  // Cylindrical arc-length trace from a converged state. `direction`
  // optionally orients the first step (du, dgamma); default: load tangent.
  EquilibriumPath trace(const Vec& u0, double gamma0, double ell, const Vec* direction = nullptr,
                        double dgamma = 0.0, int max_points = -1) const;

  // Arc-length step from (u, gamma) with a predictor (du, dg), Crisfield
  // root choice. Returns false if the corrector fails.
  bool arc_step(const Vec& u, double gamma, const Vec& du_pred, double dg_pred, double ell, Vec& u_out,
                double& g_out) const;

  // Secant/bisection on the arc-length parameter of the step between two
  // path points across which eigenvalue `index` changes sign.
  CriticalPoint locate_critical(const PathPoint& a, const PathPoint& b, double ell, int index = 0) const;

  // Equilibrium at fixed load from a start guess.
  bool newton_at_load(Vec& u, double gamma) const;

  // Default ell: `fraction` of |u| of the linear response at gamma_ref.
  double suggest_arc_length(double gamma_ref, double fraction) const;

 private:
  const Model* model_;
  Vec rho_;
  Interpolation ip_;
  PathOptions opts_;
  Assembler asmb_;
  Vec mass_;
  double load_norm_ = 1.0;
  double k_scale_ = 1.0;

  PathPoint make_point(const Vec& u, double gamma) const;
};

// Critical point search along a load-controlled primary path: trace until the
// lowest eigenvalue changes sign or gamma_max is passed.
EquilibriumPath trace_primary(const Model& model, const Vec& rho, const Interpolation& ip,
                              const PathOptions& opts);

// Predictor of a simple branch switch: u_cr + zeta phi / |phi|, zeta =
// sign |u_cr| / tau.
Vec branch_switch_predictor(const Vec& u_cr, const Vec& phi, double tau, int sign);

struct BranchSwitchResult {
  Vec u;
  double gamma = 0.0;
  double zeta = 0.0;
  int attempts = 0;
  double mode_fraction = 0.0;  // |phi'(u - u_cr)| / |u - u_cr|
};

// First point of the secondary branch: Newton on the sphere |u - u_cr| =
// |zeta| from the predictor; zeta is doubled (up to 4 times) if the corrector
// lands back on the primary branch. Throws AnalysisError on failure.
BranchSwitchResult branch_switch_simple(const PathTracer& tracer, const CriticalPoint& cp, double tau,
                                        int sign);

struct BccOptions {
  double radius_factor = 0.1;  // r = factor * |u_cr|
  double radius = 0.0;         // > 0 overrides
  double arc_fraction = 0.05;  // ell = fraction * r
  unsigned seed = 1;
  int max_points = 2000;
  double match_tol = 1e-6;     // closure / duplicate test relative to r
};

struct BranchPoint {
  Vec u;
  double gamma = 0.0;
  double residual = 0.0;  // |F_int - gamma P| / |P|
  int bcc_index = 0;      // BCC step where the sign change occurred
};

struct BccResult {
  std::vector<BranchPoint> crossings;
  double radius = 0.0;
  double arc_length = 0.0;
  Vec disturbance;            // unit, orthogonal to the load
  bool closed = false;
  int steps = 0;
  double max_aux_residual = 0.0;  // |(u-u_cr)'(u-u_cr) - r^2| / r^2
  double max_arc_residual = 0.0;
  std::string diagnostic;
};

// Disturbing load: seeded U(-1,1) vector, free dofs only, orthogonalized
// against the load and normalized.
Vec disturbance_load(const Model& model, unsigned seed);

BccResult bcc_traverse(const PathTracer& tracer, const CriticalPoint& cp, const BccOptions& opts);

// Traces each branch outwards from its point (direction away from u_cr).
// Failures are reported per path.
std::vector<EquilibriumPath> trace_post_buckling(const PathTracer& tracer, const CriticalPoint& cp,
                                                 const std::vector<BranchPoint>& points, double ell,
                                                 int max_points);

// Mirror image about the vertical centre line of a symmetric grid model
// (x -> -x displacement, nodes reflected). Throws if the mesh is not
// mirror-symmetric.
Vec reflect_displacement(const Model& model, const Vec& u);

}  // namespace stabopt
