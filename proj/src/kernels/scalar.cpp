#include "richop/kernels.hpp"

namespace richop::kernels {
namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void xpby_scalar(const double* x, double b, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + b * y[i];
}

void relu_scalar(double* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void csr_gemv_scalar(std::size_t rows, const std::int32_t* row_ptr,
                     const std::int32_t* cols, const double* vals,
                     const double* x, const double* bias, double* y) {
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::int32_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
      s += vals[k] * x[cols[k]];
    y[i] = bias ? s + bias[i] : s;
  }
}

void dense_gemv_scalar(std::size_t rows, std::size_t cols, const double* a,
                       const double* x, const double* bias, double* y) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double s = dot_scalar(a + i * cols, x, cols);
    y[i] = bias ? s + bias[i] : s;
  }
}

}  // namespace

const Table& scalar_table() {
  static const Table t{dot_scalar, axpy_scalar, xpby_scalar, relu_scalar,
                       csr_gemv_scalar, dense_gemv_scalar};
  return t;
}

}  // namespace richop::kernels
