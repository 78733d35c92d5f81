#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

#if defined(TTIME_HAVE_OPENMP)
#include <omp.h>
#endif

namespace ttime {

/// Execution policy for the data-parallel kernels. Every kernel that accepts
/// an Exec keeps its serial loop as the reference; iterations are independent
/// so both policies produce bit-identical results.
enum class Exec { serial, parallel };

inline int max_threads() {
#if defined(TTIME_HAVE_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

/// Runs fn(i) for i in [0, n). Exceptions thrown inside the parallel region
/// are captured and the first one is rethrown after the loop.
template <typename Fn>
void for_each_index(Exec exec, std::size_t n, Fn&& fn) {
  if (exec == Exec::serial || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
#if defined(TTIME_HAVE_OPENMP)
  std::exception_ptr first;
  std::mutex mu;
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (long long i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard<std::mutex> lock(mu);
      if (!first) first = std::current_exception();
    }
  }
  if (first) std::rethrow_exception(first);
#else
  for (std::size_t i = 0; i < n; ++i) fn(i);
#endif
}

}  // namespace ttime
