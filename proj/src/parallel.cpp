#include "flowsac/parallel.hpp"

#include <cstdlib>
#include <string>

namespace flowsac {

namespace {

int g_override = 0;

int env_cap() {
  static const int cap = [] {
    const char* s = std::getenv("FLOWSAC_THREADS");
    if (s == nullptr) return 0;
    try {
      const int v = std::stoi(s);
      return v > 0 ? v : 1;
    } catch (...) {
      return 0;  // unparsable value: ignore the variable
    }
  }();
  return cap;
}

}  // namespace

int max_threads() {
  if (g_override > 0) return g_override;
#ifdef _OPENMP
  int n = omp_get_max_threads();
#else
  int n = 1;
#endif
  const int cap = env_cap();
  if (cap > 0 && cap < n) n = cap;
  return n < 1 ? 1 : n;
}

void set_thread_override(int n) { g_override = n > 0 ? n : 0; }

}  // namespace flowsac
