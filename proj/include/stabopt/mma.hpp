#pragma once

#include <Eigen/Core>
#include <vector>

#include "stabopt/model.hpp"

namespace stabopt {

struct MmaSettings {
  double move = 0.5;  // max step as a fraction of the box width
  double asyinit = 0.5;
  double asyincr = 1.2;
  double asydecr = 0.7;
  double asymin = 1e-4;  // closest asymptote distance, fraction of the box width
  double albefa = 0.1;
  double raa0 = 1e-5;
  double epsimin = 1e-7;
  double a0 = 1.0;
  double a = 0.0;     // same for every constraint
  double c = 1000.0;
  double d = 1.0;
};

// Primal and dual variables of the last subproblem.
struct MmaResult {
  Vec x;
  Vec y;
  double z = 0;
  Vec lam;
  Vec xsi;
  Vec eta;
  Vec mu;
  double zet = 0;
  Vec s;
  int inner_iterations = 0;
};

// Method of moving asymptotes for
//   min f0(x)  s.t.  f_i(x) <= 0, xmin <= x <= xmax.
// Rows flagged linear are kept exact in the subproblem instead of being
// replaced by the convex asymptote approximation.
class MmaSolver {
 public:
  MmaSolver() = default;
  MmaSolver(int n, int m, const MmaSettings& settings = {});

  void set_linear_rows(const std::vector<char>& linear) { linear_ = linear; }
  // Forget the design history; asymptotes restart from their initial width.
  void reset();

  MmaResult update(const Vec& x, const Vec& xmin, const Vec& xmax, double f0, const Vec& df0,
                   const Vec& fval, const Eigen::MatrixXd& dfdx);

  int iteration() const { return iter_; }
  const Vec& low() const { return low_; }
  const Vec& upp() const { return upp_; }
  const MmaSettings& settings() const { return set_; }

 private:
  int n_ = 0, m_ = 0, iter_ = 0;
  MmaSettings set_;
  std::vector<char> linear_;
  Vec low_, upp_, xold1_, xold2_;
};

// Norm of the KKT residual of the original problem (with the elastic
// variables of the standard formulation).
double mma_kkt_residual(const MmaResult& r, const Vec& xmin, const Vec& xmax, const Vec& df0,
                        const Vec& fval, const Eigen::MatrixXd& dfdx, const MmaSettings& s);

}  // namespace stabopt
