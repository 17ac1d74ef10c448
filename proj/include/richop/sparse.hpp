#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

namespace richop {

using FemVector = Eigen::VectorXd;

// Square matrix in compressed row layout with sorted column indices.
struct CsrMatrix {
  std::size_t n = 0;
  std::vector<std::int32_t> row_ptr{0};
  std::vector<std::int32_t> cols;
  std::vector<double> vals;

  struct Triplet {
    std::int32_t row;
    std::int32_t col;
    double value;
  };
  // Duplicates are summed.
  static CsrMatrix from_triplets(std::size_t n, std::vector<Triplet> triplets);
  static CsrMatrix identity(std::size_t n);

  std::size_t nnz() const { return vals.size(); }
  double at(std::size_t i, std::size_t j) const;
  void multiply(std::span<const double> x, std::span<double> y) const;
  FemVector operator*(const FemVector& x) const;
  double quadratic_form(const FemVector& u, const FemVector& v) const;  // u^T A v
  Eigen::MatrixXd to_dense() const;
  // max |a_ij - a_ji| / max |a_ij|
  double symmetry_defect() const;
};

struct SolveReport {
  int iterations = 0;
  double relative_residual = 0.0;
  bool factorized = false;
  // ||b - Ax|| / (||A|| ||x|| + ||b||) in the infinity norm (factorized route only).
  double backward_error = 0.0;
};

// Jacobi-preconditioned conjugate gradients to ||Ax - b|| <= tol ||b||. When CG
// stalls the system is factorized instead (dense Cholesky for n <= 2000, sparse
// Cholesky above). A factorized solution that misses tol is still accepted when
// its normwise backward error is <= 1e-14, the best a stable solve can promise.
// Throws NumericalError when the matrix is not positive definite or neither
// criterion holds.
FemVector solve_spd(const CsrMatrix& a, const FemVector& b, double tol = 1e-12,
                    SolveReport* report = nullptr);

}  // namespace richop
