#include "stabopt/linear_solver.hpp"

#include <cmath>

#include "stabopt/errors.hpp"

namespace stabopt {

SymmetricSolver::SymmetricSolver() : ldlt_(std::make_unique<Ldlt>()) {}
SymmetricSolver::~SymmetricSolver() = default;
SymmetricSolver::SymmetricSolver(SymmetricSolver&&) noexcept = default;
SymmetricSolver& SymmetricSolver::operator=(SymmetricSolver&&) noexcept = default;

bool SymmetricSolver::factorize(const SpMat& A) {
  if (!analyzed_ || A.rows() != n_ || A.nonZeros() != nnz_) {
    ldlt_->analyzePattern(A);
    analyzed_ = true;
    n_ = static_cast<int>(A.rows());
    nnz_ = A.nonZeros();
  }
  ldlt_->factorize(A);
  ok_ = ldlt_->info() == Eigen::Success;
  if (ok_) {
    const auto& d = ldlt_->vectorD();
    for (Eigen::Index i = 0; i < d.size(); ++i)
      if (!std::isfinite(d[i]) || d[i] == 0.0) {
        ok_ = false;
        break;
      }
  }
  return ok_;
}

Vec SymmetricSolver::solve(const Vec& b) const {
  if (!ok_) throw AnalysisError("solve with a failed factorization");
  return ldlt_->solve(b);
}

Eigen::MatrixXd SymmetricSolver::solve(const Eigen::MatrixXd& B) const {
  if (!ok_) throw AnalysisError("solve with a failed factorization");
  return ldlt_->solve(B);
}

int SymmetricSolver::negative_pivots() const {
  const auto& d = ldlt_->vectorD();
  int n = 0;
  for (Eigen::Index i = 0; i < d.size(); ++i)
    if (d[i] < 0) ++n;
  return n;
}

}  // namespace stabopt
