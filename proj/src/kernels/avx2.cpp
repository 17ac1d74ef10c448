// Compiled with -mavx2 -mfma; only reached through avx2_table() after a CPU
// feature check.
#include <immintrin.h>

#include "richop/kernels.hpp"

namespace richop::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4)
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  for (; i < n; ++i) y[i] += a * x[i];
}

void xpby_avx2(const double* x, double b, double* y, std::size_t n) {
  const __m256d vb = _mm256_set1_pd(b);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(vb, _mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) y[i] = x[i] + b * y[i];
}

void relu_avx2(double* x, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    // max_pd(v, 0) returns the second operand for NaN, so NaN does not leak
    // through; the scalar path has the same behaviour.
    _mm256_storeu_pd(x + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
  }
  for (; i < n; ++i) x[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void csr_gemv_avx2(std::size_t rows, const std::int32_t* row_ptr,
                   const std::int32_t* cols, const double* vals,
                   const double* x, const double* bias, double* y) {
  for (std::size_t i = 0; i < rows; ++i) {
    std::int32_t k = row_ptr[i];
    const std::int32_t end = row_ptr[i + 1];
    double s = 0.0;
    if (end - k >= 8) {
      __m256d acc = _mm256_setzero_pd();
      for (; k + 4 <= end; k += 4) {
        const __m128i idx = _mm_loadu_si128(reinterpret_cast<const __m128i*>(cols + k));
        const __m256d xv = _mm256_i32gather_pd(x, idx, 8);
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(vals + k), xv, acc);
      }
      s = hsum(acc);
    }
    for (; k < end; ++k) s += vals[k] * x[cols[k]];
    y[i] = bias ? s + bias[i] : s;
  }
}

void dense_gemv_avx2(std::size_t rows, std::size_t cols, const double* a,
                     const double* x, const double* bias, double* y) {
  for (std::size_t i = 0; i < rows; ++i) {
    const double s = dot_avx2(a + i * cols, x, cols);
    y[i] = bias ? s + bias[i] : s;
  }
}

}  // namespace

const Table* avx2_table() {
  static const Table t{dot_avx2, axpy_avx2, xpby_avx2, relu_avx2, csr_gemv_avx2,
                       dense_gemv_avx2};
  return &t;
}

}  // namespace richop::kernels
