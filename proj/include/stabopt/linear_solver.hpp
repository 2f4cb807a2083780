#pragma once

#include <Eigen/SparseCholesky>
#include <memory>

#include "stabopt/model.hpp"

namespace stabopt {

// Sparse LDL^T without pivoting. Accepts indefinite matrices as long as no
// pivot vanishes; the pivot signs give the matrix inertia.
class SymmetricSolver {
 public:
  SymmetricSolver();
  ~SymmetricSolver();
  SymmetricSolver(SymmetricSolver&&) noexcept;
  SymmetricSolver& operator=(SymmetricSolver&&) noexcept;

  // Returns false on a zero or non-finite pivot.
  bool factorize(const SpMat& A);
  bool ok() const { return ok_; }
  Vec solve(const Vec& b) const;
  Eigen::MatrixXd solve(const Eigen::MatrixXd& B) const;
  int negative_pivots() const;
  int size() const { return n_; }

 private:
  using Ldlt = Eigen::SimplicialLDLT<SpMat, Eigen::Lower, Eigen::AMDOrdering<int>>;
  std::unique_ptr<Ldlt> ldlt_;
  bool analyzed_ = false;
  bool ok_ = false;
  int n_ = 0;
  Eigen::Index nnz_ = 0;
};

}  // namespace stabopt
