#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "richop/coeff.hpp"
#include "richop/fem.hpp"

namespace richop {

struct SnapshotSet {
  std::vector<std::vector<double>> parameters;  // empty for explicit coefficient lists
  std::vector<CoefficientField> coefficients;
  std::vector<FemVector> solutions;
};

// Draws count family members (sample_family) and solves for each. Every
// solution is checked against ||u||_Y <= ||f||_{Y'}/(alpha - beta) + 1e-8;
// a violation throws CertificateViolation.
SnapshotSet generate_snapshots(const DataFamily& family, std::size_t count, std::uint64_t seed,
                               const FemProblem& problem, const Polygon& domain);
SnapshotSet generate_snapshots(std::vector<CoefficientField> coefficients, const FemProblem& problem);

// Coordinate systems for span(psi_0..psi_N):
//   snapshots   the raw psi_i,
//   orthonormal q_0..q_N, b(a0)-orthonormal with q_0 = psi_0 / ||psi_0||,
//   scaled      ||psi_0|| q_i; its first vector is psi_0 and its a0-Gram
//               matrix is ||psi_0||^2 Id.
enum class Frame { snapshots, orthonormal, scaled };
const char* to_string(Frame f);
Frame frame_from_string(const std::string& s);

class ReducedBasis {
 public:
  ReducedBasis(const FemProblem& problem, std::vector<FemVector> psi, std::vector<FemVector> ortho,
               std::vector<int> selection);
  ReducedBasis(CsrMatrix nominal_stiffness, std::vector<FemVector> psi,
               std::vector<FemVector> ortho, std::vector<int> selection);

  std::size_t size() const { return psi_.size(); }  // N + 1
  std::size_t n() const { return psi_.size() - 1; }
  const std::vector<FemVector>& psi() const { return psi_; }
  const std::vector<FemVector>& ortho() const { return ortho_; }
  // Indices of psi_1..psi_N in the training set.
  const std::vector<int>& selection() const { return selection_; }
  double psi0_norm() const { return psi0_norm_; }
  const CsrMatrix& nominal_stiffness() const { return k0_; }
  const Eigen::MatrixXd& gram() const { return gram_; }  // raw psi Gram in b(a0)
  const Eigen::LLT<Eigen::MatrixXd>& gram_chol() const { return gram_chol_; }
  double gram_condition() const { return gram_condition_; }
  // psi = ortho * r, upper triangular with r(i, j) = b(a0; q_i, psi_j).
  const Eigen::MatrixXd& triangular_factor() const { return r_; }

  // First n + 1 vectors.
  ReducedBasis prefix(std::size_t n) const;
  std::vector<FemVector> frame(Frame f) const;

  // Coefficients of the b(a0)-projection of v. With require_in_span the
  // projection residual must be <= 1e-8 (1 + ||v||), else InvalidArgument. The
  // snapshots frame throws NumericalError when the Gram condition estimate
  // exceeds 1e12.
  Eigen::VectorXd analyze(const FemVector& v, Frame f = Frame::snapshots,
                          bool require_in_span = true) const;
  FemVector synthesize(const Eigen::VectorXd& c, Frame f = Frame::snapshots) const;
  // ||v - P_N v||_Y
  double projection_error(const FemVector& v) const;

 private:
  CsrMatrix k0_;
  std::vector<FemVector> psi_, ortho_;
  std::vector<FemVector> k_psi_, k_ortho_;  // K(a0) applied
  std::vector<int> selection_;
  double psi0_norm_ = 0.0;
  Eigen::MatrixXd gram_;
  Eigen::LLT<Eigen::MatrixXd> gram_chol_;
  Eigen::MatrixXd r_;
  double gram_condition_ = 1.0;
};

struct GreedyStep {
  int n = 0;           // basis is psi_0..psi_n
  double delta = 0.0;  // max training residual for that basis
  int selected = -1;   // snapshot chosen as psi_{n+1}, -1 on the last row
  double seconds = 0.0;
};
struct GreedyTrace {
  std::vector<GreedyStep> steps;
};

struct GreedyResult {
  ReducedBasis basis;
  GreedyTrace trace;
};

// Weak greedy from psi_0: each step picks the lowest-index snapshot whose
// residual is >= gamma * max residual; stops at n_max or once the max residual
// drops below 1e-13. Modified Gram-Schmidt in b(a0) with one reorthogonalization.
GreedyResult weak_greedy(const FemProblem& problem, const SnapshotSet& snapshots, int n_max,
                         double gamma = 1.0);

// (N, max over tests of ||u - P_N u||_Y) for N = 0..basis.n().
std::vector<std::pair<int, double>> delta_curve(const ReducedBasis& basis,
                                                const std::vector<FemVector>& tests);

// CSV bodies (header row included); the seconds column only when requested.
void write_greedy_csv(std::ostream& os, const GreedyTrace& trace, bool timing = false);
void write_delta_csv(std::ostream& os, const std::vector<std::pair<int, double>>& curve);

}  // namespace richop
