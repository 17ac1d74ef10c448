#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

// Data-parallel inner loops shared by the sparse solver and the ReLU network
// evaluator. Every kernel has a scalar reference implementation and, where the
// CPU allows it, an AVX2/FMA variant. The active table is chosen once at start
// up and can be overridden with RICHOP_SIMD=scalar|avx2 or set_backend().
namespace richop::kernels {

enum class Backend { scalar, avx2 };

struct Table {
  double (*dot)(const double* x, const double* y, std::size_t n);
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // y = x + b * y
  void (*xpby)(const double* x, double b, double* y, std::size_t n);
  void (*relu)(double* x, std::size_t n);
  // y[i] = bias[i] + sum_k vals[k] * x[cols[k]] over row i; bias may be null
  void (*csr_gemv)(std::size_t rows, const std::int32_t* row_ptr,
                   const std::int32_t* cols, const double* vals,
                   const double* x, const double* bias, double* y);
  // y = A x + bias with A row-major rows x cols; bias may be null
  void (*dense_gemv)(std::size_t rows, std::size_t cols, const double* a,
                     const double* x, const double* bias, double* y);
};

const Table& scalar_table();
// Null when the build lacks AVX2 support.
const Table* avx2_table();

bool cpu_has_avx2();

Backend active_backend();
void set_backend(Backend b);  // throws if the backend is unavailable
std::string_view backend_name(Backend b);

const Table& active();

inline double dot(std::span<const double> x, std::span<const double> y) {
  return active().dot(x.data(), y.data(), x.size());
}
inline void axpy(double a, std::span<const double> x, std::span<double> y) {
  active().axpy(a, x.data(), y.data(), x.size());
}
inline void xpby(std::span<const double> x, double b, std::span<double> y) {
  active().xpby(x.data(), b, y.data(), x.size());
}
inline void relu(std::span<double> x) { active().relu(x.data(), x.size()); }

// RAII override used by equivalence tests.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend b) : prev_(active_backend()) { set_backend(b); }
  ~ScopedBackend() { set_backend(prev_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend prev_;
};

}  // namespace richop::kernels
