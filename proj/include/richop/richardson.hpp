#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "richop/fem.hpp"
#include "richop/reduced_basis.hpp"

namespace richop {

// Reduced matrices and iteration data for one coefficient v, in a fixed frame.
struct ReducedSystem {
  double alpha = 1.0;
  Eigen::MatrixXd b_a0;               // b(a0; phi_j, phi_i)
  Eigen::LLT<Eigen::MatrixXd> chol_b_a0;
  Eigen::VectorXd f_n;                // (f, phi_i)
  Eigen::MatrixXd b_v;                // b(v; phi_j, phi_i)
  Eigen::MatrixXd a_v;                // Id - (alpha B_a0)^-1 B_v
  Eigen::VectorXd g;                  // (alpha B_a0)^-1 f_N

  std::size_t size() const { return static_cast<std::size_t>(f_n.size()); }
};

// Precomputes, for each quadrature point x_q of the space, the gradients of the
// frame vectors G_q (2 x (N+1)), so that B_v = sum_q w_q v(x_q) G_q^T G_q.
class ReducedAssembler {
 public:
  ReducedAssembler(const FemProblem& problem, const ReducedBasis& basis, Frame frame = Frame::scaled);

  Frame frame() const { return frame_; }
  std::size_t size() const { return m_; }
  std::size_t num_quadrature() const { return weights_.size(); }
  const std::vector<FemSpace::QuadPoint>& quadrature() const { return space_->quadrature(); }
  double alpha() const { return alpha_; }
  const Eigen::MatrixXd& b_a0() const { return b_a0_; }
  const Eigen::LLT<Eigen::MatrixXd>& chol_b_a0() const { return chol_; }
  const Eigen::VectorXd& f_n() const { return f_n_; }
  const Eigen::VectorXd& g() const { return g_; }  // (alpha B_a0)^-1 f_N
  const FemSpace& space() const { return *space_; }

  // sum_q s_q w_q G_q^T G_q for arbitrary samples s at the quadrature points.
  Eigen::MatrixXd assemble(std::span<const double> samples) const;
  Eigen::MatrixXd assemble(const CoefficientField& v) const;
  // Same sum over the listed (quadrature index, sample) pairs only.
  Eigen::MatrixXd assemble_sparse(const std::vector<std::pair<std::size_t, double>>& samples) const;
  // P^T K(v) P with P the frame vectors as columns; the sparse route.
  Eigen::MatrixXd assemble_galerkin(const CoefficientField& v) const;

  ReducedSystem system(const CoefficientField& v) const;
  ReducedSystem system(std::span<const double> v_samples) const;
  ReducedSystem system_from_matrix(Eigen::MatrixXd b_v) const;

 private:
  std::shared_ptr<const FemSpace> space_;
  Frame frame_;
  std::size_t m_ = 0;
  double alpha_ = 1.0;
  std::vector<FemVector> vectors_;
  Eigen::MatrixXd grads_;  // rows 2q, 2q+1 hold G_q
  std::vector<double> weights_;
  Eigen::MatrixXd b_a0_;
  Eigen::LLT<Eigen::MatrixXd> chol_;
  Eigen::VectorXd f_n_, g_;
};

// ||A_v||_2 by power iteration on A_v^T A_v (relative tolerance 1e-12, at most
// 1e4 iterations). Throws NumericalError if the estimate has not settled.
double contraction_norm(const Eigen::MatrixXd& a);
double contraction_norm(const ReducedSystem& s);

struct IterationState {
  Eigen::VectorXd c;
  int k = 0;
  std::vector<double> norms;                // ||c^(j)||_2, j = 0..k
  std::vector<Eigen::VectorXd> trajectory;  // c^(0..k), when recorded
};

// c^(0) = e1, c^(j+1) = A_v c^(j) + g.
IterationState iterate(const ReducedSystem& s, int k_steps, bool record_trajectory = false);
// Dense solve of B_v c = f_N.
Eigen::VectorXd direct_solve(const ReducedSystem& s);

// ceil((|log(eps/2)| + |log f - log(alpha - beta)|) / |log(beta/alpha)|); 1 when beta = 0.
int choose_K(double alpha, double beta, double f_dual_norm, double epsilon);

// sqrt((c - c_ref)^T B_a0 (c - c_ref)), the energy distance of the synthesized vectors.
double reduced_energy_error(const ReducedSystem& s, const Eigen::VectorXd& c,
                            const Eigen::VectorXd& c_ref);

// Columns k, coeff_norm, energy_error (against c_ref), ratio (error_k / error_{k-1}).
void write_iteration_csv(std::ostream& os, const ReducedSystem& s, const IterationState& state,
                         const Eigen::VectorXd& c_ref);

}  // namespace richop
