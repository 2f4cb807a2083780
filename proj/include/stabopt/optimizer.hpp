#pragma once

#include <functional>
#include <string>
#include <vector>

#include "stabopt/fem.hpp"
#include "stabopt/mma.hpp"
#include "stabopt/model.hpp"
#include "stabopt/stability.hpp"

namespace stabopt {

// Penalization ramps: each exponent starts at *_start and grows by `step`
// every `every` iterations up to *_end.
struct ContinuationSchedule {
  bool enabled = true;
  double p_start = 1.0, p_end = 3.0;
  double p_lin_start = 4.0, p_lin_end = 6.0;
  double p_m_start = 1.0, p_m_end = 6.0;
  double step = 0.1;
  int every = 5;
};

struct Penalties {
  double p = 3.0;
  double p_lin = 6.0;
  double p_m = 6.0;
};

// With the schedule disabled the *_end values are used throughout.
Penalties continuation_schedule(const ContinuationSchedule& s, int iter);

struct OptimizationConfig {
  double lambda_hat = 0.0;  // <= 0 disables the stability constraints
  double volume_fraction = 0.5;
  int num_clusters = 6;
  double theta = 0.04;       // inner-loop move limit
  double mma_move = 0.3;
  int max_outer = 800;
  int inner_max = 100;
  double inner_obj_tol = 1e-8;
  double inner_dx_tol = 1e-4;
  double tol_mult = 1e-8;
  double gamma = 1.0;        // target load factor
  double filter_radius = 1.5;
  Symmetry symmetry = Symmetry::None;
  ContinuationSchedule schedule;
  PseudoMassParams mass;
  SolverOptions solver;
  EigenOptions eigen;

  bool stability() const { return lambda_hat > 0; }
  void validate() const;
};

struct IterationRecord {
  int iter = 0;
  double f0 = 0;
  double f1 = 0;
  std::vector<double> eigenvalues;
  std::vector<int> multiplicities;
  int cutoff_updates = 0;
  double cutoff = 0;
  bool inner = false;
  Penalties penalties;
  double change = 0;       // max |x_new - x|
  int stability_rows = 0;  // m outer, m_bar + c_nt inner
  int equality_rows = 0;
};

struct OptimizationTrace {
  std::vector<IterationRecord> records;
};

struct OptimizationResult {
  Vec x;
  Vec rho;
  OptimizationTrace trace;
  IterationRecord final;  // analysis of the returned design
  bool aborted = false;
  std::string message;
};

// Number of off-diagonal equality conditions for a cluster pattern.
int count_equality_constraints(const std::vector<int>& multiplicities);

// Linearized data of the increment subproblem, all in reduced design
// variables and already scaled (objective by its reference value,
// eigenvalues by lambda_hat).
struct InnerProblem {
  Vec x;
  Vec objective_gradient;
  double volume_value = 0;   // current volume constraint value
  Vec volume_gradient;
  Vec eig_value;             // 1 - lambda_q / lambda_hat, per eigenvalue
  std::vector<Vec> eig_gradient;
  std::vector<Vec> equality_gradient;  // z_sk chained, s != k, scaled
};

struct InnerResult {
  Vec dx;
  int iterations = 0;
  bool feasible = true;
  double theta_used = 0;
  double equality_residual = 0;  // max |g| / (|grad| |dx|)
};

InnerResult inner_subproblem(const InnerProblem& prob, const OptimizationConfig& cfg);

using IterationCallback = std::function<void(const IterationRecord&, const Vec& x, const Vec& rho)>;

OptimizationResult run_optimization(const Model& model, const OptimizationConfig& cfg,
                                    const IterationCallback& callback = nullptr,
                                    const Vec* x0 = nullptr);

// Analysis of a density field for reporting: compliance, volume constraint
// value and lowest eigenvalues at the target load.
IterationRecord evaluate_design(const Model& model, const Vec& rho, const OptimizationConfig& cfg,
                                const Penalties& pen);

}  // namespace stabopt
