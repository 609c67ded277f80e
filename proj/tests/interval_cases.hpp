#pragma once

// Randomised interval-operator cases checked against exact rational ranges.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "fpcert/interval.hpp"
#include "fpcert/rng.hpp"
#include "oracles.hpp"

namespace cases {

using fpcert::Interval;
using fpcert::SplitMix64;

enum class Op { Add, Sub, Mul, Div, Sqrt, Dot, Norm };

inline const char* name(Op op) {
  switch (op) {
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Sqrt: return "sqrt";
    case Op::Dot: return "dot";
    case Op::Norm: return "norm";
  }
  return "?";
}

/// Mostly moderate magnitudes, with a share of the full exponent range
/// (subnormals and near-overflow) and a few special values.
inline double random_double(SplitMix64& g) {
  std::uint32_t kind = fpcert::bounded(g, 100);
  double sign = (g() & 1) ? -1.0 : 1.0;
  if (kind < 5) {
    static const double special[] = {0.0, 1.0, 0x1p-1074, 0x1p-1022, 1e300, 0.1, 3.0, 0x1.fffffffffffffp+1023};
    return sign * special[fpcert::bounded(g, 8)];
  }
  int lo_exp = kind < 75 ? -30 : -1074;
  int hi_exp = kind < 75 ? 30 : 1023;
  int e = lo_exp + static_cast<int>(fpcert::bounded(g, static_cast<std::uint32_t>(hi_exp - lo_exp + 1)));
  double m = 1.0 + fpcert::uniform01(g);
  return sign * std::ldexp(m, e);
}

inline bool finite(double v) { return std::isfinite(v); }

/// Point, narrow or wide interval with finite bounds.
inline Interval random_interval(SplitMix64& g) {
  double a = random_double(g);
  switch (fpcert::bounded(g, 3)) {
    case 0: return Interval(a);
    case 1: {
      double b = a;
      for (std::uint32_t k = fpcert::bounded(g, 8); k-- > 0 && finite(fpcert::fp::raw_up(b));) b = fpcert::fp::raw_up(b);
      return Interval(a, b);
    }
    default: {
      double b = random_double(g);
      return Interval(std::min(a, b), std::max(a, b));
    }
  }
}

inline Interval random_nonzero_interval(SplitMix64& g) {
  for (;;) {
    Interval v = random_interval(g);
    if (!v.contains_zero()) return v;
  }
}

inline Interval random_nonnegative_interval(SplitMix64& g) {
  Interval v = random_interval(g);
  if (v.hi() < 0.0) return Interval(-v.hi(), -v.lo());
  if (v.lo() < 0.0) return Interval(0.0, v.hi());
  return v;
}

/// lo <= exact lower end and hi >= exact upper end, infinite bounds passing.
inline bool encloses(const Interval& r, const mpq_class& lo, const mpq_class& hi) {
  bool lo_ok = r.lo() == -std::numeric_limits<double>::infinity() || oracle::exact(r.lo()) <= lo;
  bool hi_ok = r.hi() == std::numeric_limits<double>::infinity() || oracle::exact(r.hi()) >= hi;
  return lo_ok && hi_ok;
}

inline bool encloses_sqrt(const Interval& r, const mpq_class& lo_sq, const mpq_class& hi_sq) {
  bool lo_ok = r.lo() <= 0.0 || oracle::exact(r.lo()) * oracle::exact(r.lo()) <= lo_sq;
  bool hi_ok = r.hi() == std::numeric_limits<double>::infinity() ||
               (r.hi() >= 0.0 && oracle::exact(r.hi()) * oracle::exact(r.hi()) >= hi_sq);
  return lo_ok && hi_ok;
}

struct Range {
  mpq_class lo, hi;
};

inline Range product_range(const Interval& a, const Interval& b) {
  mpq_class p[4] = {oracle::exact(a.lo()) * oracle::exact(b.lo()), oracle::exact(a.lo()) * oracle::exact(b.hi()),
                    oracle::exact(a.hi()) * oracle::exact(b.lo()), oracle::exact(a.hi()) * oracle::exact(b.hi())};
  Range r{p[0], p[0]};
  for (const auto& v : p) {
    if (v < r.lo) r.lo = v;
    if (v > r.hi) r.hi = v;
  }
  return r;
}

inline Range square_range(const Interval& a) {
  mpq_class l = oracle::exact(a.lo()) * oracle::exact(a.lo());
  mpq_class h = oracle::exact(a.hi()) * oracle::exact(a.hi());
  if (a.contains_zero()) return {0, l > h ? l : h};
  return l < h ? Range{l, h} : Range{h, l};
}

struct CaseReport {
  std::uint64_t cases = 0;
  std::uint64_t violations = 0;
  std::string first_failure;
};

/// Runs n random cases of `op` under rounding policy R and counts
/// enclosures that miss the exact range.
template <class R = fpcert::DefaultRounding>
CaseReport check_op(Op op, std::uint64_t n, std::uint64_t seed) {
  SplitMix64 g(seed);
  CaseReport rep;
  auto fail = [&](const std::string& what) {
    if (rep.violations++ == 0) rep.first_failure = what;
  };
  auto iv = [](const Interval& v) {
    char buf[80];
    std::snprintf(buf, sizeof buf, "[%a, %a]", v.lo(), v.hi());
    return std::string(buf);
  };
  for (std::uint64_t i = 0; i < n; ++i) {
    ++rep.cases;
    switch (op) {
      case Op::Add:
      case Op::Sub: {
        Interval a = random_interval(g), b = random_interval(g);
        Interval r = op == Op::Add ? fpcert::iv_add<R>(a, b) : fpcert::iv_sub<R>(a, b);
        mpq_class lo, hi;
        if (op == Op::Add) {
          lo = oracle::exact(a.lo()) + oracle::exact(b.lo());
          hi = oracle::exact(a.hi()) + oracle::exact(b.hi());
        } else {
          lo = oracle::exact(a.lo()) - oracle::exact(b.hi());
          hi = oracle::exact(a.hi()) - oracle::exact(b.lo());
        }
        if (!encloses(r, lo, hi)) fail(iv(a) + " " + name(op) + " " + iv(b) + " -> " + iv(r));
        break;
      }
      case Op::Mul: {
        Interval a = random_interval(g), b = random_interval(g);
        Interval r = fpcert::iv_mul<R>(a, b);
        Range e = product_range(a, b);
        if (!encloses(r, e.lo, e.hi)) fail(iv(a) + " * " + iv(b) + " -> " + iv(r));
        break;
      }
      case Op::Div: {
        Interval a = random_interval(g), b = random_nonzero_interval(g);
        Interval r = fpcert::iv_div<R>(a, b);
        mpq_class q[4] = {oracle::exact(a.lo()) / oracle::exact(b.lo()), oracle::exact(a.lo()) / oracle::exact(b.hi()),
                          oracle::exact(a.hi()) / oracle::exact(b.lo()), oracle::exact(a.hi()) / oracle::exact(b.hi())};
        mpq_class lo = q[0], hi = q[0];
        for (const auto& v : q) {
          if (v < lo) lo = v;
          if (v > hi) hi = v;
        }
        if (!encloses(r, lo, hi)) fail(iv(a) + " / " + iv(b) + " -> " + iv(r));
        break;
      }
      case Op::Sqrt: {
        Interval a = random_nonnegative_interval(g);
        Interval r = fpcert::iv_sqrt<R>(a);
        if (!encloses_sqrt(r, oracle::exact(a.lo()), oracle::exact(a.hi()))) fail("sqrt " + iv(a) + " -> " + iv(r));
        break;
      }
      case Op::Dot: {
        std::size_t len = 1 + fpcert::bounded(g, 16);
        if (g() & 1) {
          std::vector<double> a(len), b(len);
          for (auto& v : a) v = random_double(g);
          for (auto& v : b) v = random_double(g);
          Interval r = fpcert::iv_dot<R>(std::span<const double>(a), std::span<const double>(b));
          mpq_class e = oracle::exact_dot(a, b);
          if (!encloses(r, e, e)) fail("dot of doubles, len " + std::to_string(len) + " -> " + iv(r));
        } else {
          std::vector<Interval> a, b;
          mpq_class lo = 0, hi = 0;
          for (std::size_t k = 0; k < len; ++k) {
            a.push_back(random_interval(g));
            b.push_back(random_interval(g));
            Range p = product_range(a.back(), b.back());
            lo += p.lo;
            hi += p.hi;
          }
          Interval r = fpcert::iv_dot<R>(std::span<const Interval>(a), std::span<const Interval>(b));
          if (!encloses(r, lo, hi)) fail("dot of intervals, len " + std::to_string(len) + " -> " + iv(r));
        }
        break;
      }
      case Op::Norm: {
        std::size_t len = 1 + fpcert::bounded(g, 16);
        if (g() & 1) {
          std::vector<double> a(len);
          for (auto& v : a) v = random_double(g);
          Interval r = fpcert::iv_norm2<R>(std::span<const double>(a));
          mpq_class s = oracle::exact_sum_squares(a);
          if (!encloses_sqrt(r, s, s)) fail("norm of doubles, len " + std::to_string(len) + " -> " + iv(r));
        } else {
          std::vector<Interval> a;
          mpq_class lo = 0, hi = 0;
          for (std::size_t k = 0; k < len; ++k) {
            a.push_back(random_interval(g));
            Range s = square_range(a.back());
            lo += s.lo;
            hi += s.hi;
          }
          Interval r = fpcert::iv_norm2<R>(std::span<const Interval>(a));
          if (!encloses_sqrt(r, lo, hi)) fail("norm of intervals, len " + std::to_string(len) + " -> " + iv(r));
        }
        break;
      }
    }
  }
  return rep;
}

inline constexpr Op kAllOps[] = {Op::Add, Op::Sub, Op::Mul, Op::Div, Op::Sqrt, Op::Dot, Op::Norm};

}  // namespace cases
