// SPDX-License-Identifier: Apache-2.0
//
// Portable seeded random numbers. The engine is std::mt19937_64, whose
// output sequence is fixed by the C++ standard; the distributions below are
// written out by hand because the standard library distributions are
// implementation-defined and would break cross-platform reproducibility.

#ifndef PCSEG_RNG_HPP_
#define PCSEG_RNG_HPP_

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace pcseg {

// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives a child seed from a root seed and a stream tag, e.g.
// derive_seed(seed, kShuffleStream, epoch).
constexpr std::uint64_t derive_seed(std::uint64_t root, std::uint64_t tag,
                                    std::uint64_t index = 0) {
  return mix64(mix64(root ^ mix64(tag)) + index);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n); rejection sampling removes modulo bias.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
      r = engine_();
    } while (r >= limit);
    return r % n;
  }

  // Inclusive integer range.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(
                    below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  // Standard normal via the Box-Muller transform (one draw per call).
  double normal() {
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Fisher-Yates.
  template <typename T>
  void shuffle(std::span<T> values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace pcseg

#endif  // PCSEG_RNG_HPP_
