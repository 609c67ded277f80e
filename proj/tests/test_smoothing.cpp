#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "fpcert/data_io.hpp"
#include "fpcert/smoothing.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using fpcert::ErrorCode;
using fpcert::Layer;
using fpcert::Matrix;
using fpcert::ReluNetwork;
using fpcert::SmoothingConfig;
using fpcert::Vector;
using testutil::code_of;

namespace {

// Zero weights everywhere; the output bias favours class 0.
ReluNetwork constant_net(std::size_t dim) {
  return ReluNetwork({Layer{Matrix(2, dim, 0.0), {0.0, 0.0}}, Layer{Matrix(2, 2, 0.0), {1.0, 0.0}}});
}

SmoothingConfig config(double sigma, std::uint64_t m, std::uint64_t seed = 0) {
  SmoothingConfig c;
  c.sigma_p = sigma;
  c.m_samples = m;
  c.alpha = 0.001;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(PhiInv, Examples) {
  EXPECT_EQ(fpcert::phi_inv(0.5), 0.0);
  EXPECT_NEAR(fpcert::phi_inv(0.975), 1.959964, 1e-5);
  EXPECT_EQ(code_of([] { fpcert::phi_inv(0.0); }), ErrorCode::DomainError);
  EXPECT_EQ(code_of([] { fpcert::phi_inv(1.0); }), ErrorCode::DomainError);
  EXPECT_EQ(code_of([] { fpcert::phi_inv(NAN); }), ErrorCode::DomainError);
}

TEST(PhiInv, MatchesHighPrecisionOracle) {
  fpcert::SplitMix64 g(61);
  for (int i = 0; i < 300; ++i) {
    double p = i < 100 ? fpcert::uniform(g, 1e-6, 1 - 1e-6) : std::ldexp(fpcert::uniform01(g) + 0.5, -(i % 40) - 2);
    double want = oracle::normal_quantile(p);
    double got = fpcert::phi_inv(p);
    ASSERT_LE(std::fabs(got - want), 1e-9 * std::max(1.0, std::fabs(want))) << p;
    if (p >= 0.5) {
      // 1 - p is exact here, so the identity holds without a rounded argument.
      ASSERT_NEAR(fpcert::phi_inv(1 - p), -fpcert::phi_inv(p), 1e-9 * std::max(1.0, std::fabs(want)));
    }
  }
}

TEST(ClopperPearson, Examples) {
  EXPECT_EQ(fpcert::clopper_pearson_lower(0, 37, 0.001), 0.0);
  EXPECT_NEAR(fpcert::clopper_pearson_lower(100, 100, 0.001), std::pow(0.001, 0.01), 1e-12);
  double half = fpcert::clopper_pearson_lower(50, 100, 0.001);
  EXPECT_GT(half, 0.0);
  EXPECT_LT(half, 0.5);
  EXPECT_NEAR(half, oracle::clopper_pearson_lower(50, 100, 0.001), 1e-10);
  EXPECT_EQ(code_of([] { fpcert::clopper_pearson_lower(5, 4, 0.01); }), ErrorCode::DomainError);
  EXPECT_EQ(code_of([] { fpcert::clopper_pearson_lower(0, 0, 0.01); }), ErrorCode::DomainError);
  EXPECT_EQ(code_of([] { fpcert::clopper_pearson_lower(1, 4, 1.0); }), ErrorCode::DomainError);
}

TEST(ClopperPearson, MatchesBisectionOracle) {
  for (std::uint64_t n : {2u, 10u, 100u, 1000u}) {
    for (std::uint64_t k = 0; k <= n; k += std::max<std::uint64_t>(1, n / 10)) {
      for (double alpha : {0.001, 0.05}) {
        double got = fpcert::clopper_pearson_lower(k, n, alpha);
        ASSERT_NEAR(got, oracle::clopper_pearson_lower(k, n, alpha), 1e-10) << k << "/" << n << " " << alpha;
      }
    }
  }
}

TEST(ClopperPearson, LowerBoundAndMonotone) {
  for (std::uint64_t n : {1u, 7u, 100u, 500u}) {
    double prev = -1.0;
    for (std::uint64_t k = 0; k <= n; ++k) {
      double p = fpcert::clopper_pearson_lower(k, n, 0.001);
      ASSERT_LE(p, static_cast<double>(k) / static_cast<double>(n));
      ASSERT_GE(p, prev);
      prev = p;
    }
  }
}

TEST(SmoothCertify, UnanimousVotesRadius) {
  std::vector<std::uint64_t> votes{100, 0};
  auto cert = fpcert::smooth_certify_from_votes(votes, config(1.0, 100));
  ASSERT_FALSE(cert.abstained());
  EXPECT_EQ(cert.label, 0u);
  double p = oracle::clopper_pearson_lower(100, 100, 0.001);
  EXPECT_NEAR(cert.p_a_lower, p, 1e-10);
  EXPECT_NEAR(*cert.radius, oracle::normal_quantile(p), 1e-5);
  EXPECT_NEAR(*cert.radius, 1.5004750, 1e-5);
  auto doubled = fpcert::smooth_certify_from_votes(votes, config(2.0, 100));
  EXPECT_DOUBLE_EQ(*doubled.radius, 2.0 * *cert.radius);
  EXPECT_NEAR(fpcert::smoothing_radius(1.0, cert.p_a_lower, 1.0 - cert.p_a_lower), *cert.radius, 1e-12);
}

TEST(SmoothCertify, AbstainsExactlyAtOrBelowHalf) {
  for (std::uint64_t m : {10u, 100u, 1000u}) {
    for (std::uint64_t top = m / 2; top <= m; ++top) {
      std::vector<std::uint64_t> votes{m - top, top};
      auto cert = fpcert::smooth_certify_from_votes(votes, config(1.0, m));
      ASSERT_EQ(cert.abstained(), cert.p_a_lower <= 0.5) << top << "/" << m;
      if (!cert.abstained()) {
        ASSERT_GT(*cert.radius, 0.0);
      }
    }
  }
}

TEST(SmoothCertify, RadiusMonotoneInTopCount) {
  double prev = 0.0;
  for (std::uint64_t top = 50; top <= 100; ++top) {
    std::vector<std::uint64_t> votes{top, 100 - top};
    auto cert = fpcert::smooth_certify_from_votes(votes, config(3.0, 100));
    double r = cert.radius.value_or(0.0);
    ASSERT_GE(r, prev) << top;
    prev = r;
  }
}

TEST(SmoothPredict, ConstantClassifierNeverAbstains) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto label = fpcert::smooth_predict(constant_net(3), Vector{0.1, 0.2, 0.3}, config(5.0, 100, seed));
    ASSERT_TRUE(label.has_value());
    EXPECT_EQ(*label, 0u);
  }
}

TEST(SmoothPredict, TieAbstains) {
  std::vector<std::uint64_t> votes{30, 30, 40};
  EXPECT_FALSE(fpcert::smooth_predict_from_votes(std::vector<std::uint64_t>{50, 50}, 0.001).has_value());
  EXPECT_FALSE(fpcert::smooth_predict_from_votes(votes, 0.001).has_value());
  EXPECT_EQ(fpcert::smooth_predict_from_votes(std::vector<std::uint64_t>{5, 95}, 0.001), 1u);
}

TEST(SmoothPredict, DeterministicForFixedSeed) {
  std::vector<std::size_t> hidden{8};
  ReluNetwork net = fpcert::gen_random_relu_net(4, hidden, 3, 9, false);
  Vector x{0.3, -0.2, 0.5, 0.1};
  auto cfg = config(0.5, 200, 42);
  auto a = fpcert::smooth_votes(net, x, cfg);
  auto b = fpcert::smooth_votes(net, x, cfg);
  EXPECT_EQ(a, b);
  auto ca = fpcert::smooth_certify(net, x, cfg), cb = fpcert::smooth_certify(net, x, cfg);
  EXPECT_EQ(ca.p_a_lower, cb.p_a_lower);
  EXPECT_EQ(ca.radius, cb.radius);
  cfg.seed = 43;
  EXPECT_NE(fpcert::smooth_votes(net, x, cfg), a);
}

TEST(SmoothingConfig, Validation) {
  EXPECT_EQ(code_of([] { config(0.0, 100).validate(); }), ErrorCode::DomainError);
  EXPECT_EQ(code_of([] { config(1.0, 1).validate(); }), ErrorCode::DomainError);
  EXPECT_EQ(code_of([] {
              auto c = config(1.0, 100);
              c.alpha = 0.0;
              c.validate();
            }),
            ErrorCode::DomainError);
  EXPECT_EQ(code_of([] { fpcert::smooth_votes(constant_net(3), Vector{1.0}, config(1.0, 10)); }),
            ErrorCode::DimensionMismatch);
}
