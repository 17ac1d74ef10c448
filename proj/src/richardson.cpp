#include "richop/richardson.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>

#include "richop/error.hpp"
#include "richop/rng.hpp"

namespace richop {

ReducedAssembler::ReducedAssembler(const FemProblem& problem, const ReducedBasis& basis, Frame frame)
    : space_(problem.space_ptr()), frame_(frame), m_(basis.size()), alpha_(problem.config().alpha),
      vectors_(basis.frame(frame)) {
  if (vectors_.front().size() != static_cast<Eigen::Index>(space_->num_free()))
    throw InvalidArgument("reduced assembler: basis does not live on the problem's space");
  const auto m = static_cast<Eigen::Index>(m_);
  Eigen::MatrixXd p(static_cast<Eigen::Index>(space_->num_free()), m);
  for (Eigen::Index j = 0; j < m; ++j) p.col(j) = vectors_[static_cast<std::size_t>(j)];

  const auto& qps = space_->quadrature();
  const auto& qg = space_->quadrature_gradients();
  grads_ = Eigen::MatrixXd::Zero(2 * static_cast<Eigen::Index>(qps.size()), m);
  weights_.resize(qps.size());
  for (std::size_t q = 0; q < qps.size(); ++q) {
    weights_[q] = qps[q].weight;
    const auto& g = qg[q];
    const auto r = 2 * static_cast<Eigen::Index>(q);
    for (int i = 0; i < g.local; ++i) {
      if (g.free[i] < 0) continue;
      grads_.row(r) += g.grad[i].x * p.row(g.free[i]);
      grads_.row(r + 1) += g.grad[i].y * p.row(g.free[i]);
    }
  }

  b_a0_ = assemble(sample_at_quadrature(*space_, problem.config().a0));
  chol_.compute(b_a0_);
  if (chol_.info() != Eigen::Success) throw NumericalError("reduced nominal matrix is not positive definite");
  f_n_ = p.transpose() * problem.load();
  g_ = chol_.solve(f_n_) / alpha_;
}

Eigen::MatrixXd ReducedAssembler::assemble(std::span<const double> samples) const {
  if (samples.size() != weights_.size()) throw InvalidArgument("reduced assembly: sample count mismatch");
  Eigen::MatrixXd scaled = grads_;
  for (std::size_t q = 0; q < weights_.size(); ++q) {
    const double s = weights_[q] * samples[q];
    scaled.row(2 * static_cast<Eigen::Index>(q)) *= s;
    scaled.row(2 * static_cast<Eigen::Index>(q) + 1) *= s;
  }
  const Eigen::MatrixXd b = grads_.transpose() * scaled;
  return 0.5 * (b + b.transpose());
}

Eigen::MatrixXd ReducedAssembler::assemble_sparse(
    const std::vector<std::pair<std::size_t, double>>& samples) const {
  const auto m = static_cast<Eigen::Index>(m_);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(m, m);
  for (const auto& [q, s] : samples) {
    if (q >= weights_.size()) throw InvalidArgument("reduced assembly: quadrature index out of range");
    const double w = weights_[q] * s;
    const auto r = 2 * static_cast<Eigen::Index>(q);
    b.selfadjointView<Eigen::Lower>().rankUpdate(grads_.row(r).transpose(), w);
    b.selfadjointView<Eigen::Lower>().rankUpdate(grads_.row(r + 1).transpose(), w);
  }
  return b.selfadjointView<Eigen::Lower>();
}

Eigen::MatrixXd ReducedAssembler::assemble(const CoefficientField& v) const {
  return assemble(sample_at_quadrature(*space_, v));
}

Eigen::MatrixXd ReducedAssembler::assemble_galerkin(const CoefficientField& v) const {
  const CsrMatrix k = assemble_stiffness(*space_, v);
  const auto m = static_cast<Eigen::Index>(m_);
  Eigen::MatrixXd b(m, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const FemVector kj = k * vectors_[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < m; ++i) b(i, j) = vectors_[static_cast<std::size_t>(i)].dot(kj);
  }
  return b;
}

ReducedSystem ReducedAssembler::system_from_matrix(Eigen::MatrixXd b_v) const {
  const auto m = static_cast<Eigen::Index>(m_);
  if (b_v.rows() != m || b_v.cols() != m) throw InvalidArgument("reduced system: matrix size mismatch");
  ReducedSystem s;
  s.alpha = alpha_;
  s.b_a0 = b_a0_;
  s.chol_b_a0 = chol_;
  s.f_n = f_n_;
  s.a_v = Eigen::MatrixXd::Identity(m, m) - chol_.solve(b_v) / alpha_;
  s.g = g_;
  s.b_v = std::move(b_v);
  return s;
}

ReducedSystem ReducedAssembler::system(std::span<const double> v_samples) const {
  return system_from_matrix(assemble(v_samples));
}

ReducedSystem ReducedAssembler::system(const CoefficientField& v) const {
  return system_from_matrix(assemble(v));
}

double contraction_norm(const Eigen::MatrixXd& a) {
  if (a.size() == 0) return 0.0;
  const Eigen::MatrixXd m = a.transpose() * a;
  Rng rng(0x6a09e667f3bcc908ULL);
  Eigen::VectorXd x(m.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(0.5, 1.5);
  x.normalize();
  for (int it = 0; it < 10000; ++it) {
    const Eigen::VectorXd y = m * x;
    const double lambda = x.dot(y);
    const double ny = y.norm();
    if (ny == 0.0) return 0.0;
    if ((y - lambda * x).norm() <= 1e-12 * lambda) return std::sqrt(lambda);
    x = y / ny;
  }
  throw NumericalError("power iteration for the contraction norm did not settle");
}

double contraction_norm(const ReducedSystem& s) { return contraction_norm(s.a_v); }

IterationState iterate(const ReducedSystem& s, int k_steps, bool record_trajectory) {
  if (k_steps < 0) throw InvalidArgument("iterate: negative step count");
  IterationState st;
  st.c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.size()));
  st.c[0] = 1.0;
  st.norms.push_back(st.c.norm());
  if (record_trajectory) st.trajectory.push_back(st.c);
  for (int j = 0; j < k_steps; ++j) {
    st.c = s.a_v * st.c + s.g;
    ++st.k;
    st.norms.push_back(st.c.norm());
    if (record_trajectory) st.trajectory.push_back(st.c);
  }
  return st;
}

Eigen::VectorXd direct_solve(const ReducedSystem& s) {
  const Eigen::LLT<Eigen::MatrixXd> llt(s.b_v);
  if (llt.info() != Eigen::Success) throw NumericalError("reduced matrix is not positive definite");
  return llt.solve(s.f_n);
}

int choose_K(double alpha, double beta, double f_dual_norm, double epsilon) {
  if (!(alpha > 0.0) || !(beta >= 0.0) || !(beta < alpha))
    throw InvalidArgument("choose_K needs 0 <= beta < alpha");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw InvalidArgument("choose_K needs epsilon in (0, 1)");
  if (!(f_dual_norm > 0.0)) throw InvalidArgument("choose_K needs a positive source norm");
  if (beta == 0.0) return 1;
  const double num = std::abs(std::log(epsilon / 2.0)) +
                     std::abs(std::log(f_dual_norm) - std::log(alpha - beta));
  return std::max(1, static_cast<int>(std::ceil(num / std::abs(std::log(beta / alpha)))));
}

double reduced_energy_error(const ReducedSystem& s, const Eigen::VectorXd& c,
                            const Eigen::VectorXd& c_ref) {
  if (c.size() != c_ref.size() || c.size() != s.b_a0.rows())
    throw InvalidArgument("reduced_energy_error: length mismatch");
  const Eigen::VectorXd d = c - c_ref;
  return std::sqrt(std::max(0.0, d.dot(s.b_a0 * d)));
}

void write_iteration_csv(std::ostream& os, const ReducedSystem& s, const IterationState& state,
                         const Eigen::VectorXd& c_ref) {
  if (state.trajectory.size() != state.norms.size())
    throw InvalidArgument("iteration csv needs a recorded trajectory");
  os << "k,coeff_norm,energy_error,ratio\n" << std::setprecision(17);
  double prev = 0.0;
  for (std::size_t k = 0; k < state.trajectory.size(); ++k) {
    const double e = reduced_energy_error(s, state.trajectory[k], c_ref);
    os << k << ',' << state.norms[k] << ',' << e << ',';
    if (k > 0 && prev > 0.0) os << e / prev;
    os << '\n';
    prev = e;
  }
}

}  // namespace richop
