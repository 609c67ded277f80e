#pragma once

// ULP-level stepping over IEEE-754 binary64 values.
//
// Everything here works on the raw bit pattern: a finite double is a
// sign-magnitude integer, and its neighbours are one magnitude step away.
// No <cmath> routine is involved, so candidate sets built from these
// functions are identical on every platform.

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>

#include "fpcert/error.hpp"

namespace fpcert {

enum class Direction { Up, Down };

namespace fp {

inline constexpr std::uint64_t kSignMask = 0x8000000000000000ULL;
inline constexpr std::uint64_t kExponentMask = 0x7ff0000000000000ULL;

constexpr std::uint64_t to_bits(double x) noexcept { return std::bit_cast<std::uint64_t>(x); }
constexpr double from_bits(std::uint64_t u) noexcept { return std::bit_cast<double>(u); }

constexpr bool is_finite_bits(double x) noexcept {
  return (to_bits(x) & kExponentMask) != kExponentMask;
}

/// Adjacent value above x without any checks. +inf maps to itself, -inf to
/// -DBL_MAX, and both zeros to the smallest positive subnormal.
constexpr double raw_up(double x) noexcept {
  std::uint64_t u = to_bits(x);
  if ((u & ~kSignMask) == 0) return from_bits(1);  // +-0
  if (x == std::numeric_limits<double>::infinity()) return x;
  return from_bits((u & kSignMask) ? u - 1 : u + 1);
}

constexpr double raw_down(double x) noexcept {
  std::uint64_t u = to_bits(x);
  if ((u & ~kSignMask) == 0) return from_bits(kSignMask | 1);
  if (x == -std::numeric_limits<double>::infinity()) return x;
  return from_bits((u & kSignMask) ? u + 1 : u - 1);
}

/// Size of the gap between |x| and the next representable magnitude above it.
inline double ulp(double x) {
  double a = std::fabs(x);
  if (a == std::numeric_limits<double>::max()) return a - raw_down(a);
  return raw_up(a) - a;
}

/// Signed distance in representable steps from a to b (monotone integer
/// mapping of the bit patterns; +0 and -0 collapse to the same point).
constexpr std::int64_t ordinal(double x) noexcept {
  std::uint64_t u = to_bits(x);
  auto mag = static_cast<std::int64_t>(u & ~kSignMask);
  return (u & kSignMask) ? -mag : mag;
}

constexpr std::int64_t steps_between(double a, double b) noexcept { return ordinal(b) - ordinal(a); }

}  // namespace fp

/// The adjacent representable double strictly above (Up) or below (Down) x.
inline double next_after(double x, Direction dir) {
  if (!fp::is_finite_bits(x)) throw Error(ErrorCode::NonFiniteInput, "next_after of non-finite value");
  double r = dir == Direction::Up ? fp::raw_up(x) : fp::raw_down(x);
  if (!fp::is_finite_bits(r)) throw Error(ErrorCode::Overflow, "next_after stepped past the largest finite value");
  return r;
}

inline double next_up(double x) { return next_after(x, Direction::Up); }
inline double next_down(double x) { return next_after(x, Direction::Down); }

/// next_after applied n times.
inline double step_n(double x, Direction dir, std::uint64_t n) {
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "step_n requires n >= 1");
  for (std::uint64_t i = 0; i < n; ++i) x = next_after(x, dir);
  return x;
}

struct FloatStep {
  double value = 0.0;
  Direction direction = Direction::Up;
  std::uint64_t count = 1;

  double apply() const { return step_n(value, direction, count); }
  FloatStep inverse() const {
    return {apply(), direction == Direction::Up ? Direction::Down : Direction::Up, count};
  }
};

}  // namespace fpcert
