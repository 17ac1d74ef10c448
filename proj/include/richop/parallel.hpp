#pragma once

#include <cstddef>
#include <functional>

namespace richop {

// Worker count for parallel_for: set_thread_count() if called with n >= 1,
// else RICHOP_THREADS, else 1.
void set_thread_count(int n);
int thread_count();

// Runs fn(i) for i in [0, n) on up to thread_count() threads. Each index is
// processed exactly once; results must be written to per-index slots so the
// outcome does not depend on scheduling. The first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace richop
