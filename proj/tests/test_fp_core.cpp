#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>

#include "fpcert/fp_core.hpp"
#include "fpcert/rng.hpp"
#include "test_util.hpp"

using fpcert::Direction;
using fpcert::ErrorCode;
using testutil::code_of;

namespace {

// Reference stepping on the sign-magnitude bit pattern, written without the
// library's helpers: +1/-1 on the magnitude, sign flip through zero.
double oracle_step(double x, Direction dir) {
  std::uint64_t u;
  std::memcpy(&u, &x, sizeof u);
  const std::uint64_t sign = u & 0x8000000000000000ULL;
  std::uint64_t mag = u & 0x7fffffffffffffffULL;
  bool away = (dir == Direction::Up) == (sign == 0);
  if (mag == 0) {
    // +0 and -0 both step to the smallest subnormal of the requested sign.
    u = dir == Direction::Up ? 1 : 0x8000000000000001ULL;
  } else if (away) {
    u = sign | (mag + 1);
  } else {
    u = sign | (mag - 1);
  }
  double r;
  std::memcpy(&r, &u, sizeof r);
  return r;
}

double random_finite(fpcert::SplitMix64& g) {
  for (;;) {
    std::uint64_t u = g();
    double v;
    std::memcpy(&v, &u, sizeof v);
    if (std::isfinite(v)) return v;
  }
}

}  // namespace

TEST(NextAfter, AdjacentToOne) {
  EXPECT_EQ(fpcert::next_after(1.0, Direction::Up), 1.0000000000000002);
  EXPECT_EQ(fpcert::next_after(1.0, Direction::Down), 0.9999999999999999);
}

TEST(NextAfter, FromZero) {
  EXPECT_EQ(fpcert::next_after(0.0, Direction::Up), 5e-324);
  EXPECT_EQ(fpcert::next_after(0.0, Direction::Down), -5e-324);
  EXPECT_EQ(fpcert::next_after(-0.0, Direction::Up), 5e-324);
  EXPECT_EQ(fpcert::next_after(5e-324, Direction::Down), 0.0);
}

TEST(NextAfter, Errors) {
  const double inf = std::numeric_limits<double>::infinity();
  const double max = std::numeric_limits<double>::max();
  EXPECT_EQ(code_of([&] { fpcert::next_after(std::nan(""), Direction::Up); }), ErrorCode::NonFiniteInput);
  EXPECT_EQ(code_of([&] { fpcert::next_after(inf, Direction::Down); }), ErrorCode::NonFiniteInput);
  EXPECT_EQ(code_of([&] { fpcert::next_after(-inf, Direction::Up); }), ErrorCode::NonFiniteInput);
  EXPECT_EQ(code_of([&] { fpcert::next_after(max, Direction::Up); }), ErrorCode::Overflow);
  EXPECT_EQ(code_of([&] { fpcert::next_after(-max, Direction::Down); }), ErrorCode::Overflow);
  EXPECT_EQ(fpcert::next_after(max, Direction::Down), std::nextafter(max, 0.0));
}

TEST(StepN, Examples) {
  EXPECT_EQ(fpcert::step_n(1.0, Direction::Up, 2), 1.0000000000000004);
  EXPECT_EQ(fpcert::step_n(fpcert::step_n(1.5, Direction::Down, 3), Direction::Up, 3), 1.5);
  EXPECT_EQ(code_of([] { fpcert::step_n(1.0, Direction::Up, 0); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(code_of([] { fpcert::step_n(std::numeric_limits<double>::max(), Direction::Up, 3); }),
            ErrorCode::Overflow);
}

TEST(StepN, CrossesZero) {
  EXPECT_EQ(fpcert::step_n(5e-324, Direction::Down, 2), -5e-324);
  EXPECT_EQ(fpcert::step_n(-5e-324, Direction::Up, 2), 5e-324);
}

TEST(FloatStep, InverseRestoresValue) {
  fpcert::FloatStep s{2.5, Direction::Up, 7};
  EXPECT_EQ(s.inverse().apply(), 2.5);
  EXPECT_EQ(s.apply(), fpcert::step_n(2.5, Direction::Up, 7));
}

TEST(NextAfterProperty, MatchesBitPatternOracle) {
  fpcert::SplitMix64 g(11);
  for (int i = 0; i < 200000; ++i) {
    double x = random_finite(g);
    for (Direction d : {Direction::Up, Direction::Down}) {
      double want = oracle_step(x, d);
      if (!std::isfinite(want)) continue;
      double got = fpcert::next_after(x, d);
      ASSERT_EQ(std::memcmp(&got, &want, sizeof got), 0) << std::hexfloat << x;
      ASSERT_EQ(got, std::nextafter(x, d == Direction::Up ? INFINITY : -INFINITY));
    }
  }
}

TEST(NextAfterProperty, StrictlyMonotoneAndInvertible) {
  fpcert::SplitMix64 g(12);
  for (int i = 0; i < 200000; ++i) {
    double x = random_finite(g);
    if (std::fabs(x) == std::numeric_limits<double>::max()) continue;
    double up = fpcert::next_up(x), down = fpcert::next_down(x);
    ASSERT_GT(up, x);
    ASSERT_LT(down, x);
    if (std::isnormal(x)) {
      double back = fpcert::next_down(up);
      ASSERT_EQ(std::memcmp(&back, &x, sizeof x), 0);
      ASSERT_EQ(fpcert::next_up(down), x);
    }
  }
}

TEST(NextAfterProperty, StepNIsIteratedNextAfter) {
  fpcert::SplitMix64 g(13);
  for (int i = 0; i < 20000; ++i) {
    double x = std::ldexp(1.0 + fpcert::uniform01(g), static_cast<int>(fpcert::bounded(g, 200)) - 100);
    std::uint64_t n = 1 + fpcert::bounded(g, 20);
    double y = x;
    for (std::uint64_t k = 0; k < n; ++k) y = oracle_step(y, Direction::Up);
    ASSERT_EQ(fpcert::step_n(x, Direction::Up, n), y);
    ASSERT_EQ(fpcert::step_n(y, Direction::Down, n), x);
  }
}
