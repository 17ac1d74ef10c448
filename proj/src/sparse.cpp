#include "richop/sparse.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>

#include "richop/error.hpp"
#include "richop/kernels.hpp"

namespace richop {

CsrMatrix CsrMatrix::from_triplets(std::size_t n, std::vector<Triplet> t) {
  for (const auto& e : t)
    if (e.row < 0 || e.col < 0 || static_cast<std::size_t>(e.row) >= n ||
        static_cast<std::size_t>(e.col) >= n)
      throw InvalidArgument("triplet index out of range");
  std::sort(t.begin(), t.end(), [](const Triplet& a, const Triplet& b) {
    return a.row != b.row ? a.row < b.row : a.col < b.col;
  });
  CsrMatrix m;
  m.n = n;
  m.row_ptr.assign(n + 1, 0);
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (k > 0 && t[k].row == t[k - 1].row && t[k].col == t[k - 1].col) {
      m.vals.back() += t[k].value;
      continue;
    }
    m.cols.push_back(t[k].col);
    m.vals.push_back(t[k].value);
    ++m.row_ptr[t[k].row + 1];
  }
  for (std::size_t i = 0; i < n; ++i) m.row_ptr[i + 1] += m.row_ptr[i];
  return m;
}

CsrMatrix CsrMatrix::identity(std::size_t n) {
  CsrMatrix m;
  m.n = n;
  m.row_ptr.resize(n + 1);
  for (std::size_t i = 0; i <= n; ++i) m.row_ptr[i] = static_cast<std::int32_t>(i);
  for (std::size_t i = 0; i < n; ++i) m.cols.push_back(static_cast<std::int32_t>(i));
  m.vals.assign(n, 1.0);
  return m;
}

double CsrMatrix::at(std::size_t i, std::size_t j) const {
  const auto b = cols.begin() + row_ptr[i], e = cols.begin() + row_ptr[i + 1];
  const auto it = std::lower_bound(b, e, static_cast<std::int32_t>(j));
  return it != e && *it == static_cast<std::int32_t>(j) ? vals[it - cols.begin()] : 0.0;
}

void CsrMatrix::multiply(std::span<const double> x, std::span<double> y) const {
  kernels::active().csr_gemv(n, row_ptr.data(), cols.data(), vals.data(), x.data(), nullptr,
                             y.data());
}

FemVector CsrMatrix::operator*(const FemVector& x) const {
  FemVector y(static_cast<Eigen::Index>(n));
  multiply({x.data(), n}, {y.data(), n});
  return y;
}

double CsrMatrix::quadratic_form(const FemVector& u, const FemVector& v) const {
  return u.dot(*this * v);
}

Eigen::MatrixXd CsrMatrix::to_dense() const {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (auto p = row_ptr[i]; p < row_ptr[i + 1]; ++p) d(i, cols[p]) += vals[p];
  return d;
}

double CsrMatrix::symmetry_defect() const {
  double scale = 0.0, defect = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (auto p = row_ptr[i]; p < row_ptr[i + 1]; ++p) {
      scale = std::max(scale, std::abs(vals[p]));
      defect = std::max(defect, std::abs(vals[p] - at(cols[p], i)));
    }
  return scale > 0.0 ? defect / scale : 0.0;
}

namespace {

double relative_residual(const CsrMatrix& a, const FemVector& x, const FemVector& b, double bnorm) {
  return (b - a * x).norm() / bnorm;
}

}  // namespace

FemVector solve_spd(const CsrMatrix& a, const FemVector& b, double tol, SolveReport* report) {
  if (static_cast<std::size_t>(b.size()) != a.n) throw InvalidArgument("solve_spd: size mismatch");
  if (!(tol > 0.0)) throw InvalidArgument("solve_spd: tolerance must be positive");
  SolveReport rep;
  const std::size_t n = a.n;
  const double bnorm = b.norm();
  FemVector x = FemVector::Zero(static_cast<Eigen::Index>(n));
  if (bnorm == 0.0) {
    if (report) *report = rep;
    return x;
  }
  FemVector dinv(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const double d = a.at(i, i);
    if (!(d > 0.0)) throw NumericalError("solve_spd: nonpositive diagonal entry");
    dinv[i] = 1.0 / d;
  }
  FemVector r = b, z = dinv.cwiseProduct(r), p = z, q(static_cast<Eigen::Index>(n));
  std::span<double> xs(x.data(), n), rs(r.data(), n), ps(p.data(), n), qs(q.data(), n),
      zs(z.data(), n);
  double rz = kernels::dot(rs, zs);
  const int max_iter = static_cast<int>(std::max<std::size_t>(100, 4 * n));
  double best = 1.0;
  int since_best = 0;
  for (int it = 1; it <= max_iter; ++it) {
    a.multiply(ps, qs);
    const double pq = kernels::dot(ps, qs);
    if (!(pq > 0.0)) break;
    const double step = rz / pq;
    kernels::axpy(step, ps, xs);
    kernels::axpy(-step, qs, rs);
    rep.iterations = it;
    const double rel = r.norm() / bnorm;
    if (rel <= tol) {
      // The recursive residual drifts; confirm with the true one.
      r = b - a * x;
      if (r.norm() / bnorm <= tol) break;
    }
    if (rel < 0.5 * best) {
      best = rel;
      since_best = 0;
    } else if (++since_best > 200) {
      break;
    }
    z = dinv.cwiseProduct(r);
    const double rz_new = kernels::dot(rs, zs);
    kernels::xpby(zs, rz_new / rz, ps);
    rz = rz_new;
  }
  rep.relative_residual = relative_residual(a, x, b, bnorm);
  if (rep.relative_residual > tol) {
    if (n <= 2000) {
      const Eigen::LLT<Eigen::MatrixXd> llt(a.to_dense());
      if (llt.info() != Eigen::Success) throw NumericalError("solve_spd: matrix is not positive definite");
      x = llt.solve(b);
      x += llt.solve(FemVector(b - a * x));
    } else {
      std::vector<Eigen::Triplet<double>> t;
      t.reserve(a.nnz());
      for (std::size_t i = 0; i < n; ++i)
        for (auto p = a.row_ptr[i]; p < a.row_ptr[i + 1]; ++p)
          t.emplace_back(static_cast<int>(i), a.cols[p], a.vals[p]);
      Eigen::SparseMatrix<double> s(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
      s.setFromTriplets(t.begin(), t.end());
      const Eigen::SimplicialLLT<Eigen::SparseMatrix<double>> llt(s);
      if (llt.info() != Eigen::Success) throw NumericalError("solve_spd: matrix is not positive definite");
      x = llt.solve(b);
      x += llt.solve(FemVector(b - a * x));
    }
    rep.factorized = true;
    rep.relative_residual = relative_residual(a, x, b, bnorm);
    double anorm = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      for (auto p = a.row_ptr[i]; p < a.row_ptr[i + 1]; ++p) row += std::abs(a.vals[p]);
      anorm = std::max(anorm, row);
    }
    rep.backward_error = (b - a * x).lpNorm<Eigen::Infinity>() /
                         (anorm * x.lpNorm<Eigen::Infinity>() + b.lpNorm<Eigen::Infinity>());
    if (rep.relative_residual > tol && rep.backward_error > 1e-14) {
      if (report) *report = rep;
      throw NumericalError("solve_spd: tolerance not reached");
    }
  }
  if (report) *report = rep;
  return x;
}

}  // namespace richop
