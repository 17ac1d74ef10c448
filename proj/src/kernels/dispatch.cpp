#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "richop/kernels.hpp"

namespace richop::kernels {

#ifndef RICHOP_HAVE_AVX2
const Table* avx2_table() { return nullptr; }
#endif

bool cpu_has_avx2() {
#if defined(RICHOP_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

namespace {

Backend initial_backend() {
  const bool avx2_ok = avx2_table() != nullptr && cpu_has_avx2();
  if (const char* env = std::getenv("RICHOP_SIMD")) {
    const std::string v(env);
    if (v == "scalar") return Backend::scalar;
    if (v == "avx2" && avx2_ok) return Backend::avx2;
  }
  return avx2_ok ? Backend::avx2 : Backend::scalar;
}

std::atomic<Backend>& state() {
  static std::atomic<Backend> b{initial_backend()};
  return b;
}

}  // namespace

Backend active_backend() { return state().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
  if (b == Backend::avx2 && (avx2_table() == nullptr || !cpu_has_avx2()))
    throw std::runtime_error("AVX2 kernels unavailable on this build/CPU");
  state().store(b, std::memory_order_relaxed);
}

std::string_view backend_name(Backend b) {
  return b == Backend::avx2 ? "avx2" : "scalar";
}

const Table& active() {
  return active_backend() == Backend::avx2 ? *avx2_table() : scalar_table();
}

}  // namespace richop::kernels
