#pragma once

// Rounded interval arithmetic over binary64.
//
// Each elementary operation is evaluated once in round-to-nearest and the
// result is turned into an enclosure by a rounding policy. The default policy
// reads the sign of the error-free residual (TwoSum or FMA) and steps one ULP
// outward only on the side where the exact value lies; the simpler
// UlpWidening policy steps out on both sides unless the result is exact.
// Neither touches the FPU rounding mode, so intervals can be computed from
// any thread. A policy is any type with static add/sub/mul/div/
// sqrt members returning a Bounds that contains the exact real result.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>

#include "fpcert/error.hpp"
#include "fpcert/fp_core.hpp"

namespace fpcert {

struct Bounds {
  double lo;
  double hi;
};

namespace rounding {

namespace detail {

// Below this magnitude an FMA residual may itself be rounded, so exactness
// (and the residual's sign) cannot be trusted.
inline constexpr double kResidualSafe = 0x1p-960;

inline bool residual_safe(double v) { return v == 0.0 || std::fabs(v) >= kResidualSafe; }

inline Bounds widen(double r) { return {fp::raw_down(r), fp::raw_up(r)}; }

/// widen(r), but never crossing zero against the known sign of the exact
/// result, so an underflowed product stays on its side of the origin.
inline Bounds widen_signed(double r, bool negative) {
  Bounds b = widen(r);
  if (negative)
    b.hi = std::min(b.hi, 0.0);
  else
    b.lo = std::max(b.lo, 0.0);
  return b;
}

/// Enclosure from a round-to-nearest result and the sign of (exact - r).
inline Bounds from_error_sign(double r, double err) {
  if (err == 0.0) return {r, r};
  if (err > 0.0) return {r, fp::raw_up(r)};
  return {fp::raw_down(r), r};
}

/// Knuth TwoSum; the error term is exact whenever s is finite.
inline double two_sum_err(double a, double b, double s) {
  double bb = s - a;
  return (a - (s - bb)) + (b - bb);
}

inline bool finite(double v) { return fp::is_finite_bits(v); }

}  // namespace detail

/// One ULP outward on each side unless the result is provably exact.
struct UlpWidening {
  static Bounds add(double a, double b) {
    double s = a + b;
    if (detail::finite(s) && detail::two_sum_err(a, b, s) == 0.0) return {s, s};
    return detail::widen(s);
  }
  static Bounds sub(double a, double b) { return add(a, -b); }
  static Bounds mul(double a, double b) {
    if (a == 0.0 || b == 0.0) return {0.0, 0.0};
    double p = a * b;
    if (detail::finite(p) && p != 0.0 && std::fabs(p) >= detail::kResidualSafe &&
        std::fma(a, b, -p) == 0.0)
      return {p, p};
    return detail::widen(p);
  }
  static Bounds div(double a, double b) {
    if (a == 0.0) return {0.0, 0.0};
    double q = a / b;
    if (detail::finite(q) && q != 0.0 && detail::finite(b) && std::fabs(q) >= detail::kResidualSafe &&
        std::fabs(a) >= detail::kResidualSafe && std::fma(-q, b, a) == 0.0)
      return {q, q};
    return detail::widen(q);
  }
  static Bounds sqrt(double a) {
    if (a == 0.0) return {0.0, 0.0};
    double s = std::sqrt(a);
    if (detail::finite(s) && a >= detail::kResidualSafe && std::fma(-s, s, a) == 0.0) return {s, s};
    return detail::widen(s);
  }
};

/// Tight directed rounding recovered from the sign of the error-free
/// residual: the enclosure is either {r} or the pair of floats around the
/// exact value. Near underflow, where residuals are unreliable, it widens
/// one ULP on each side without crossing zero. Unlike UlpWidening this is
/// inclusion isotonic: each bound is a monotone function of the exact value.
struct ErrorFreeDirected {
  static Bounds add(double a, double b) {
    double s = a + b;
    if (!detail::finite(s)) return detail::widen(s);
    return detail::from_error_sign(s, detail::two_sum_err(a, b, s));
  }
  static Bounds sub(double a, double b) { return add(a, -b); }
  static Bounds mul(double a, double b) {
    if (a == 0.0 || b == 0.0) return {0.0, 0.0};
    double p = a * b;
    if (!detail::finite(p)) return detail::widen(p);
    if (std::fabs(p) < detail::kResidualSafe) return detail::widen_signed(p, std::signbit(a) != std::signbit(b));
    return detail::from_error_sign(p, std::fma(a, b, -p));
  }
  static Bounds div(double a, double b) {
    if (a == 0.0) return {0.0, 0.0};
    double q = a / b;
    if (!detail::finite(q) || !detail::finite(b)) return detail::widen(q);
    if (std::fabs(q) < detail::kResidualSafe || std::fabs(a) < detail::kResidualSafe)
      return detail::widen_signed(q, std::signbit(a) != std::signbit(b));
    double r = std::fma(-q, b, a);  // a - q*b, exact here
    return detail::from_error_sign(q, b > 0.0 ? r : -r);
  }
  static Bounds sqrt(double a) {
    if (a == 0.0) return {0.0, 0.0};
    double s = std::sqrt(a);
    // The safe region is decided on s, which is monotone in a.
    if (!detail::finite(s) || s < kSqrtSafe) return detail::widen_signed(s, false);
    return detail::from_error_sign(s, std::fma(-s, s, a));
  }

 private:
  static constexpr double kSqrtSafe = 0x1p-479;
};

}  // namespace rounding

using DefaultRounding = rounding::ErrorFreeDirected;

/// Closed interval [lo, hi] of doubles that brackets a real value. Infinite
/// bounds are allowed only as lo = -inf or hi = +inf (overflow signal).
class Interval {
 public:
  constexpr Interval() = default;
  /// Singleton [v, v].
  explicit Interval(double v) : Interval(v, v) {}
  Interval(double lo, double hi) : lo_(lo), hi_(hi) {
    if (std::isnan(lo) || std::isnan(hi))
      throw Error(ErrorCode::InvalidInterval, "NaN bound");
    if (lo > hi)
      throw Error(ErrorCode::InvalidInterval, "lo > hi");
    if (lo == std::numeric_limits<double>::infinity() || hi == -std::numeric_limits<double>::infinity())
      throw Error(ErrorCode::InvalidInterval, "bound infinite on the wrong side");
  }

  double lo() const noexcept { return lo_; }
  double hi() const noexcept { return hi_; }
  double width() const noexcept { return hi_ - lo_; }
  double mid() const noexcept { return lo_ + (hi_ - lo_) / 2; }
  bool is_singleton() const noexcept { return lo_ == hi_; }
  bool contains(double v) const noexcept { return lo_ <= v && v <= hi_; }
  bool contains(const Interval& o) const noexcept { return lo_ <= o.lo_ && o.hi_ <= hi_; }
  bool contains_zero() const noexcept { return lo_ <= 0.0 && 0.0 <= hi_; }

  friend bool operator==(const Interval&, const Interval&) = default;

 private:
  double lo_ = 0.0;
  double hi_ = 0.0;
};

namespace detail {

// 0 * inf inside interval products stands for the limit 0.
template <class R>
Bounds product_bounds(double a, double b) {
  if (a == 0.0 || b == 0.0) return {0.0, 0.0};
  return R::mul(a, b);
}

inline Interval make(double lo, double hi) {
  // NaN only arises from inf/inf style corners; the whole line encloses them.
  if (std::isnan(lo)) lo = -std::numeric_limits<double>::infinity();
  if (std::isnan(hi)) hi = std::numeric_limits<double>::infinity();
  return Interval(lo, hi);
}

}  // namespace detail

template <class R = DefaultRounding>
Interval iv_add(const Interval& a, const Interval& b) {
  return detail::make(R::add(a.lo(), b.lo()).lo, R::add(a.hi(), b.hi()).hi);
}

template <class R = DefaultRounding>
Interval iv_sub(const Interval& a, const Interval& b) {
  return detail::make(R::sub(a.lo(), b.hi()).lo, R::sub(a.hi(), b.lo()).hi);
}

template <class R = DefaultRounding>
Interval iv_mul(const Interval& a, const Interval& b) {
  const Bounds p[4] = {
      detail::product_bounds<R>(a.lo(), b.lo()), detail::product_bounds<R>(a.lo(), b.hi()),
      detail::product_bounds<R>(a.hi(), b.lo()), detail::product_bounds<R>(a.hi(), b.hi())};
  double lo = p[0].lo, hi = p[0].hi;
  for (const Bounds& q : p) {
    lo = std::min(lo, q.lo);
    hi = std::max(hi, q.hi);
  }
  return detail::make(lo, hi);
}

/// Division by an interval that contains zero is rejected rather than
/// returning a union of half-lines.
template <class R = DefaultRounding>
Interval iv_div(const Interval& a, const Interval& b) {
  if (b.contains_zero()) throw Error(ErrorCode::DivisorSpansZero, "divisor interval contains 0");
  const Bounds q[4] = {R::div(a.lo(), b.lo()), R::div(a.lo(), b.hi()), R::div(a.hi(), b.lo()),
                       R::div(a.hi(), b.hi())};
  double lo = q[0].lo, hi = q[0].hi;
  for (const Bounds& v : q) {
    if (std::isnan(v.lo) || std::isnan(v.hi))
      return Interval(-std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity());
    lo = std::min(lo, v.lo);
    hi = std::max(hi, v.hi);
  }
  return detail::make(lo, hi);
}

template <class R = DefaultRounding>
Interval iv_sqrt(const Interval& a) {
  if (a.lo() < 0.0) throw Error(ErrorCode::NegativeOperand, "sqrt of interval with negative lower bound");
  double lo = std::max(0.0, R::sqrt(a.lo()).lo);
  double hi = a.hi() == std::numeric_limits<double>::infinity() ? a.hi() : R::sqrt(a.hi()).hi;
  return detail::make(lo, hi);
}

/// Exact: negation and comparison introduce no rounding.
inline Interval iv_abs(const Interval& a) {
  if (a.lo() >= 0.0) return a;
  if (a.hi() <= 0.0) return Interval(-a.hi(), -a.lo());
  return Interval(0.0, std::max(-a.lo(), a.hi()));
}

/// x*x with the dependency handled: never negative, unlike iv_mul(a, a).
template <class R = DefaultRounding>
Interval iv_sqr(const Interval& a) {
  Interval m = iv_abs(a);
  double lo = m.lo() == 0.0 ? 0.0 : std::max(0.0, R::mul(m.lo(), m.lo()).lo);
  double hi = R::mul(m.hi(), m.hi()).hi;
  return detail::make(lo, hi);
}

/// Left-to-right accumulation of a[i]*b[i].
template <class R = DefaultRounding>
Interval iv_dot(std::span<const Interval> a, std::span<const Interval> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "iv_dot operand lengths differ");
  Interval acc(0.0);
  for (std::size_t i = 0; i < a.size(); ++i) acc = iv_add<R>(acc, iv_mul<R>(a[i], b[i]));
  return acc;
}

/// Same as iv_dot over singleton intervals, without materialising them.
template <class R = DefaultRounding>
Interval iv_dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "iv_dot operand lengths differ");
  Interval acc(0.0);
  for (std::size_t i = 0; i < a.size(); ++i) acc = iv_add<R>(acc, iv_mul<R>(Interval(a[i]), Interval(b[i])));
  return acc;
}

template <class R = DefaultRounding>
Interval iv_sum_squares(std::span<const Interval> a) {
  Interval acc(0.0);
  for (const Interval& v : a) acc = iv_add<R>(acc, iv_sqr<R>(v));
  return acc;
}

template <class R = DefaultRounding>
Interval iv_sum_squares(std::span<const double> a) {
  Interval acc(0.0);
  for (double v : a) acc = iv_add<R>(acc, iv_sqr<R>(Interval(v)));
  return acc;
}

/// Euclidean norm: sqrt of the left-to-right sum of squares.
template <class R = DefaultRounding>
Interval iv_norm2(std::span<const Interval> a) {
  return iv_sqrt<R>(iv_sum_squares<R>(a));
}

template <class R = DefaultRounding>
Interval iv_norm2(std::span<const double> a) {
  return iv_sqrt<R>(iv_sum_squares<R>(a));
}

inline Interval operator+(const Interval& a, const Interval& b) { return iv_add(a, b); }
inline Interval operator-(const Interval& a, const Interval& b) { return iv_sub(a, b); }
inline Interval operator*(const Interval& a, const Interval& b) { return iv_mul(a, b); }
inline Interval operator/(const Interval& a, const Interval& b) { return iv_div(a, b); }

}  // namespace fpcert
