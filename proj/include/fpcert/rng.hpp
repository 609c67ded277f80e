#pragma once

// Seedable, splittable random streams.
//
// The engine is SplitMix64 (Steele, Lea & Flood 2014). A stream for a child
// task is derived by hashing (parent seed, index) through the same mixer, so
// per-trial or per-sample streams depend only on their index and never on
// how work is scheduled across threads.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace fpcert {

class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit constexpr SplitMix64(std::uint64_t seed = 0) noexcept : state_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Seed of the index-th child stream.
  static constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t index) noexcept {
    return mix(mix(seed ^ 0x6a09e667f3bcc909ULL) + mix(index + 0x9e3779b97f4a7c15ULL));
  }

  constexpr SplitMix64 split(std::uint64_t index) const noexcept { return SplitMix64(derive(state_, index)); }

 private:
  std::uint64_t state_;
};

/// Uniform double in [0, 1) with 53 random bits.
template <class Engine>
double uniform01(Engine& g) {
  return static_cast<double>(g() >> 11) * 0x1p-53;
}

template <class Engine>
double uniform(Engine& g, double a, double b) {
  return a + (b - a) * uniform01(g);
}

/// Unbiased integer in [0, range) (Lemire's multiply-shift with rejection).
template <class Engine>
std::uint32_t bounded(Engine& g, std::uint32_t range) {
  std::uint32_t x = static_cast<std::uint32_t>(g() >> 32);
  std::uint64_t m = std::uint64_t{x} * range;
  auto low = static_cast<std::uint32_t>(m);
  if (low < range) {
    std::uint32_t threshold = static_cast<std::uint32_t>(-range) % range;
    while (low < threshold) {
      x = static_cast<std::uint32_t>(g() >> 32);
      m = std::uint64_t{x} * range;
      low = static_cast<std::uint32_t>(m);
    }
  }
  return static_cast<std::uint32_t>(m >> 32);
}

/// Standard normal pairs by the Box-Muller transform.
template <class Engine>
class NormalSampler {
 public:
  explicit NormalSampler(Engine& g) : g_(g) {}

  double operator()() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 1.0 - uniform01(g_);  // (0, 1]
    double u2 = uniform01(g_);
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

 private:
  Engine& g_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace fpcert
