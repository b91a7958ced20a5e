#pragma once

#include <cstdint>
#include <exception>
#include <mutex>
#include <utility>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace flowsac {

// Effective worker count: min(OpenMP max threads, FLOWSAC_THREADS if set),
// unless a programmatic override is active.  Always >= 1.
int max_threads();

// Force the worker count from code (tests, benchmarks), ignoring the
// OpenMP default and the environment cap; n <= 0 clears the override.  Not
// thread safe; call from a serial context.
void set_thread_override(int n);

// Fixed chunk count used for deterministic reductions: partial sums are
// accumulated serially within each chunk and combined in chunk order, so the
// result is bitwise identical for any thread count.
inline constexpr int kReduceChunks = 64;

// Half-open index range of chunk `c` when [0, n) is cut into n_chunks pieces.
inline std::pair<std::int64_t, std::int64_t> chunk_range(std::int64_t n,
                                                         int c, int n_chunks) {
  const std::int64_t lo = n * c / n_chunks;
  const std::int64_t hi = n * (c + 1) / n_chunks;
  return {lo, hi};
}

// Run body(i) for i in [0, n).  Bodies must only write state owned by index
// i (or a chunk, when iterating chunks); under that contract the outcome is
// independent of thread count.  If bodies throw, the exception raised for the
// smallest index is rethrown after the loop, matching serial behaviour.
template <typename Body>
void parallel_for(std::int64_t n, const Body& body) {
  const int threads = max_threads();
#ifdef _OPENMP
  const bool nested = omp_in_parallel() != 0;
#else
  const bool nested = false;
#endif
  if (threads <= 1 || n <= 1 || nested) {
    for (std::int64_t i = 0; i < n; ++i) body(i);
    return;
  }
#ifdef _OPENMP
  std::mutex err_mutex;
  std::exception_ptr first_error;
  std::int64_t first_error_index = n;
#pragma omp parallel for num_threads(threads) schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      body(i);
    } catch (...) {
      std::lock_guard<std::mutex> lock(err_mutex);
      if (i < first_error_index) {
        first_error_index = i;
        first_error = std::current_exception();
      }
    }
  }
  if (first_error) std::rethrow_exception(first_error);
#else
  for (std::int64_t i = 0; i < n; ++i) body(i);
#endif
}

}  // namespace flowsac
