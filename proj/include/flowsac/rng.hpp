#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace flowsac {

// splitmix64 finalizer; good enough to decorrelate derived seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Deterministic random stream with cheap splitting.
//
// The generator is a seeded mt19937_64 (its output sequence is pinned by the
// standard, so results are reproducible across compilers).  split(tag)
// derives an independent child stream from the *construction* seed and the
// tag, never from the evolving engine state; the same (seed, tag) pair always
// yields the same child.  Parallel code hands each work item its own child
// stream so results do not depend on thread count or scheduling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(mix64(mix64(seed))) {}

  Rng split(std::uint64_t tag) const {
    return Rng(mix64(seed_ ^ mix64(tag + 0x632be59bd9b4e019ull)));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; caches the second variate.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    // u1 in (0, 1] so the log is finite.
    const double u1 =
        (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    has_cached_ = true;
    return r * std::cos(a);
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace flowsac
