#include "richop/reduced_basis.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "richop/error.hpp"
#include "richop/parallel.hpp"

namespace richop {

namespace {

void check_snorm(const FemProblem& problem, const std::vector<FemVector>& solutions) {
  const auto& cfg = problem.config();
  const double bound = problem.dual_norm() / (cfg.alpha - cfg.beta) + 1e-8;
  for (std::size_t i = 0; i < solutions.size(); ++i) {
    const double norm = problem.energy_norm(solutions[i]);
    if (norm > bound)
      throw CertificateViolation("snapshot " + std::to_string(i) + " has energy norm " +
                                 std::to_string(norm) + " above the a priori bound " +
                                 std::to_string(bound));
  }
}

std::vector<FemVector> solve_all(const FemProblem& problem,
                                 const std::vector<CoefficientField>& coefficients) {
  std::vector<FemVector> out(coefficients.size());
  parallel_for(coefficients.size(),
               [&](std::size_t i) { out[i] = problem.galerkin_solve(coefficients[i]); });
  check_snorm(problem, out);
  return out;
}

double energy_sq(const FemVector& r, const FemVector& kr) { return std::max(0.0, r.dot(kr)); }

}  // namespace

SnapshotSet generate_snapshots(const DataFamily& family, std::size_t count, std::uint64_t seed,
                               const FemProblem& problem, const Polygon& domain) {
  SnapshotSet s;
  s.parameters = family.sample_parameters(count, seed);
  s.coefficients = sample_family(family, count, seed, domain);
  s.solutions = solve_all(problem, s.coefficients);
  return s;
}

SnapshotSet generate_snapshots(std::vector<CoefficientField> coefficients, const FemProblem& problem) {
  SnapshotSet s;
  s.coefficients = std::move(coefficients);
  s.solutions = solve_all(problem, s.coefficients);
  return s;
}

const char* to_string(Frame f) {
  switch (f) {
    case Frame::snapshots: return "snapshots";
    case Frame::orthonormal: return "orthonormal";
    case Frame::scaled: return "scaled";
  }
  return "?";
}

Frame frame_from_string(const std::string& s) {
  if (s == "snapshots") return Frame::snapshots;
  if (s == "orthonormal") return Frame::orthonormal;
  if (s == "scaled") return Frame::scaled;
  throw ConfigError("unknown basis frame '" + s + "'");
}

ReducedBasis::ReducedBasis(const FemProblem& problem, std::vector<FemVector> psi,
                           std::vector<FemVector> ortho, std::vector<int> selection)
    : ReducedBasis(problem.nominal_stiffness(), std::move(psi), std::move(ortho),
                   std::move(selection)) {}

ReducedBasis::ReducedBasis(CsrMatrix k0, std::vector<FemVector> psi, std::vector<FemVector> ortho,
                           std::vector<int> selection)
    : k0_(std::move(k0)), psi_(std::move(psi)), ortho_(std::move(ortho)),
      selection_(std::move(selection)) {
  if (psi_.empty()) throw InvalidArgument("reduced basis needs psi_0");
  if (ortho_.size() != psi_.size() || selection_.size() + 1 != psi_.size())
    throw InvalidArgument("reduced basis: inconsistent sizes");
  const auto n = static_cast<Eigen::Index>(k0_.n);
  for (std::size_t i = 0; i < psi_.size(); ++i)
    if (psi_[i].size() != n || ortho_[i].size() != n)
      throw InvalidArgument("reduced basis: vector size does not match the space");
  k_psi_.reserve(psi_.size());
  k_ortho_.reserve(psi_.size());
  for (std::size_t i = 0; i < psi_.size(); ++i) {
    k_psi_.push_back(k0_ * psi_[i]);
    k_ortho_.push_back(k0_ * ortho_[i]);
  }
  psi0_norm_ = std::sqrt(energy_sq(psi_[0], k_psi_[0]));
  if (!(psi0_norm_ > 0.0)) throw InvalidArgument("psi_0 vanishes");

  const auto m = static_cast<Eigen::Index>(psi_.size());
  gram_.resize(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j <= i; ++j) {
      const double g = 0.5 * (psi_[i].dot(k_psi_[j]) + psi_[j].dot(k_psi_[i]));
      gram_(i, j) = gram_(j, i) = g;
    }
  gram_chol_.compute(gram_);
  r_ = Eigen::MatrixXd::Zero(m, m);
  for (Eigen::Index j = 0; j < m; ++j)
    for (Eigen::Index i = 0; i <= j; ++i) r_(i, j) = k_ortho_[i].dot(psi_[j]);
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram_, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff(), hi = eig.eigenvalues().maxCoeff();
  gram_condition_ = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

ReducedBasis ReducedBasis::prefix(std::size_t n) const {
  if (n > this->n()) throw InvalidArgument("prefix larger than the basis");
  return ReducedBasis(k0_, {psi_.begin(), psi_.begin() + n + 1},
                      {ortho_.begin(), ortho_.begin() + n + 1},
                      {selection_.begin(), selection_.begin() + n});
}

std::vector<FemVector> ReducedBasis::frame(Frame f) const {
  switch (f) {
    case Frame::snapshots: return psi_;
    case Frame::orthonormal: return ortho_;
    case Frame::scaled: {
      std::vector<FemVector> out;
      out.reserve(ortho_.size());
      for (const auto& q : ortho_) out.push_back(psi0_norm_ * q);
      return out;
    }
  }
  return {};
}

Eigen::VectorXd ReducedBasis::analyze(const FemVector& v, Frame f, bool require_in_span) const {
  if (v.size() != static_cast<Eigen::Index>(k0_.n)) throw InvalidArgument("analyze: size mismatch");
  const auto m = static_cast<Eigen::Index>(size());
  const FemVector kv = k0_ * v;
  Eigen::VectorXd q(m);
  for (Eigen::Index i = 0; i < m; ++i) q[i] = k_ortho_[i].dot(v);
  if (require_in_span) {
    FemVector r = v;
    FemVector kr = kv;
    for (Eigen::Index i = 0; i < m; ++i) {
      const double c = k_ortho_[i].dot(r);
      r -= c * ortho_[i];
      kr -= c * k_ortho_[i];
    }
    const double res = std::sqrt(energy_sq(r, kr));
    const double vn = std::sqrt(energy_sq(v, kv));
    if (res > 1e-8 * (1.0 + vn))
      throw InvalidArgument("analyze: vector is not in the span (residual " + std::to_string(res) + ")");
  }
  switch (f) {
    case Frame::orthonormal: return q;
    case Frame::scaled: return q / psi0_norm_;
    case Frame::snapshots: {
      if (gram_condition_ > 1e12)
        throw NumericalError("snapshot Gram matrix is ill-conditioned (condition estimate " +
                             std::to_string(gram_condition_) + ")");
      return r_.triangularView<Eigen::Upper>().solve(q);
    }
  }
  return q;
}

FemVector ReducedBasis::synthesize(const Eigen::VectorXd& c, Frame f) const {
  if (c.size() != static_cast<Eigen::Index>(size())) throw InvalidArgument("synthesize: length mismatch");
  const auto& vecs = f == Frame::snapshots ? psi_ : ortho_;
  FemVector out = FemVector::Zero(static_cast<Eigen::Index>(k0_.n));
  for (std::size_t i = 0; i < vecs.size(); ++i) out += c[static_cast<Eigen::Index>(i)] * vecs[i];
  if (f == Frame::scaled) out *= psi0_norm_;
  return out;
}

double ReducedBasis::projection_error(const FemVector& v) const {
  return delta_curve(*this, {v}).back().second;
}

GreedyResult weak_greedy(const FemProblem& problem, const SnapshotSet& snapshots, int n_max,
                         double gamma) {
  if (snapshots.solutions.empty()) throw InvalidArgument("weak greedy needs snapshots");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidArgument("weak greedy needs gamma in (0, 1]");
  if (n_max < 0) throw InvalidArgument("weak greedy needs n_max >= 0");
  using clock = std::chrono::steady_clock;
  const CsrMatrix& k0 = problem.nominal_stiffness();
  const std::size_t count = snapshots.solutions.size();

  std::vector<FemVector> psi{problem.psi0()}, ortho, k_ortho;
  std::vector<int> selection;
  {
    const FemVector kp = k0 * problem.psi0();
    const double nrm = std::sqrt(energy_sq(problem.psi0(), kp));
    if (!(nrm > 0.0)) throw NumericalError("psi_0 vanishes");
    ortho.push_back(problem.psi0() / nrm);
    k_ortho.push_back(kp / nrm);
  }

  // Residuals R_j of every snapshot against the current basis, with W_j = K0 R_j.
  std::vector<FemVector> res = snapshots.solutions, kres(count);
  std::vector<double> norm(count);
  std::vector<char> taken(count, 0);
  auto project_out = [&](const FemVector& q, const FemVector& kq) {
    parallel_for(count, [&](std::size_t j) {
      const double c = kq.dot(res[j]);
      res[j] -= c * q;
      kres[j] -= c * kq;
      norm[j] = std::sqrt(energy_sq(res[j], kres[j]));
    });
  };
  parallel_for(count, [&](std::size_t j) { kres[j] = k0 * res[j]; });
  auto t0 = clock::now();
  project_out(ortho[0], k_ortho[0]);

  GreedyTrace trace;
  for (int n = 0;; ++n) {
    double best = 0.0;
    for (std::size_t j = 0; j < count; ++j)
      if (!taken[j]) best = std::max(best, norm[j]);
    GreedyStep step;
    step.n = n;
    step.delta = best;
    if (n >= n_max || best < 1e-13) {
      step.seconds = std::chrono::duration<double>(clock::now() - t0).count();
      trace.steps.push_back(step);
      break;
    }
    std::size_t pick = 0;
    while (taken[pick] || norm[pick] < gamma * best) ++pick;
    step.selected = static_cast<int>(pick);
    taken[pick] = 1;

    FemVector q = res[pick] / norm[pick];
    FemVector kq = kres[pick] / norm[pick];
    for (std::size_t i = 0; i < ortho.size(); ++i) {
      const double c = k_ortho[i].dot(q);
      q -= c * ortho[i];
      kq -= c * k_ortho[i];
    }
    kq = k0 * q;
    const double qn = std::sqrt(energy_sq(q, kq));
    q /= qn;
    kq /= qn;
    psi.push_back(snapshots.solutions[pick]);
    ortho.push_back(q);
    k_ortho.push_back(kq);
    selection.push_back(step.selected);
    project_out(q, kq);
    norm[pick] = 0.0;

    const auto t1 = clock::now();
    step.seconds = std::chrono::duration<double>(t1 - t0).count();
    t0 = t1;
    trace.steps.push_back(step);
  }
  return {ReducedBasis(problem, std::move(psi), std::move(ortho), std::move(selection)),
          std::move(trace)};
}

std::vector<std::pair<int, double>> delta_curve(const ReducedBasis& basis,
                                                const std::vector<FemVector>& tests) {
  const CsrMatrix& k0 = basis.nominal_stiffness();
  const auto& ortho = basis.ortho();
  std::vector<FemVector> k_ortho(ortho.size());
  parallel_for(ortho.size(), [&](std::size_t i) { k_ortho[i] = k0 * ortho[i]; });
  // errs[t][N]
  std::vector<std::vector<double>> errs(tests.size(), std::vector<double>(ortho.size()));
  parallel_for(tests.size(), [&](std::size_t t) {
    FemVector r = tests[t];
    FemVector kr = k0 * r;
    for (std::size_t i = 0; i < ortho.size(); ++i) {
      const double c = k_ortho[i].dot(r);
      r -= c * ortho[i];
      kr -= c * k_ortho[i];
      errs[t][i] = std::sqrt(energy_sq(r, kr));
    }
  });
  std::vector<std::pair<int, double>> out;
  for (std::size_t n = 0; n < ortho.size(); ++n) {
    double d = 0.0;
    for (const auto& e : errs) d = std::max(d, e[n]);
    out.emplace_back(static_cast<int>(n), d);
  }
  return out;
}

void write_greedy_csv(std::ostream& os, const GreedyTrace& trace, bool timing) {
  os << "N,delta,selected_index" << (timing ? ",seconds" : "") << '\n' << std::setprecision(17);
  for (const auto& s : trace.steps) {
    os << s.n << ',' << s.delta << ',' << s.selected;
    if (timing) os << ',' << s.seconds;
    os << '\n';
  }
}

void write_delta_csv(std::ostream& os, const std::vector<std::pair<int, double>>& curve) {
  os << "N,delta\n" << std::setprecision(17);
  for (const auto& [n, d] : curve) os << n << ',' << d << '\n';
}

}  // namespace richop
