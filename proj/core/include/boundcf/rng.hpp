#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <vector>

namespace boundcf {

// Seeded generator used everywhere randomness is needed. Distributions are
// derived from raw 64-bit draws so results do not depend on the standard
// library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform in [0, n). n must be positive.
  std::size_t index(std::size_t n);

  // Standard normal via Box-Muller; one draw per call, no caching.
  double normal();

  bool bernoulli(double p) { return uniform() < p; }

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(values[i - 1], values[j]);
    }
  }

  // Derive an independent stream for a sub-task.
  Rng fork(std::uint64_t salt);

 private:
  std::mt19937_64 engine_;
};

}  // namespace boundcf
