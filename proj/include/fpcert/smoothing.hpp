#pragma once

// Randomized smoothing over a ReLU base classifier: Monte Carlo prediction
// with a binomial abstention test, and the Gaussian certified radius
// sigma * Phi^-1(pA_lower) obtained from a one-sided Clopper-Pearson bound.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/special_functions/beta.hpp>

#include "fpcert/error.hpp"
#include "fpcert/models.hpp"
#include "fpcert/rng.hpp"

namespace fpcert {

struct SmoothingConfig {
  double sigma_p = 1.0;
  std::uint64_t m_samples = 100;
  double alpha = 0.001;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(sigma_p > 0.0) || !std::isfinite(sigma_p)) throw Error(ErrorCode::DomainError, "sigma_p must be > 0");
    if (m_samples < 2) throw Error(ErrorCode::DomainError, "m_samples must be >= 2");
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::DomainError, "alpha must lie in (0,1)");
  }
};

/// Standard normal quantile.
inline double phi_inv(double p) {
  if (!(p > 0.0 && p < 1.0)) throw Error(ErrorCode::DomainError, "phi_inv needs p in (0,1)");
  return boost::math::quantile(boost::math::normal_distribution<double>(), p);
}

/// One-sided lower confidence bound at level 1-alpha on a binomial
/// proportion: the alpha quantile of Beta(k, n-k+1).
inline double clopper_pearson_lower(std::uint64_t k, std::uint64_t n, double alpha) {
  if (n == 0 || k > n) throw Error(ErrorCode::DomainError, "clopper_pearson_lower needs 0 <= k <= n, n >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::DomainError, "alpha must lie in (0,1)");
  if (k == 0) return 0.0;
  return boost::math::ibeta_inv(static_cast<double>(k), static_cast<double>(n - k + 1), alpha);
}

/// Two-sided exact binomial test of H0: p = 1/2 for `top` successes out of
/// `top + second` trials.
inline double binomial_test_p_value(std::uint64_t top, std::uint64_t second) {
  std::uint64_t n = top + second;
  if (n == 0) return 1.0;
  std::uint64_t lo = std::min(top, second);
  if (2 * lo == n) return 1.0;
  boost::math::binomial_distribution<double> dist(static_cast<double>(n), 0.5);
  double p = 2.0 * boost::math::cdf(dist, static_cast<double>(lo));
  return std::min(1.0, p);
}

/// Per-class base-classifier votes under Gaussian noise. Sample j draws its
/// noise from the stream derived from (seed, j), so the votes do not depend
/// on evaluation order.
inline std::vector<std::uint64_t> smooth_votes(const ReluNetwork& net, std::span<const double> x,
                                               const SmoothingConfig& cfg) {
  cfg.validate();
  check_dim(net.input_dim(), x.size(), "smooth_votes");
  std::vector<std::uint64_t> votes(net.num_classes(), 0);
  Vector noisy(x.size());
  for (std::uint64_t j = 0; j < cfg.m_samples; ++j) {
    SplitMix64 g(SplitMix64::derive(cfg.seed, j));
    NormalSampler<SplitMix64> normal(g);
    for (std::size_t i = 0; i < x.size(); ++i) noisy[i] = x[i] + cfg.sigma_p * normal();
    ++votes[relu_predict(net, noisy)];
  }
  return votes;
}

struct VoteSummary {
  std::size_t top = 0;
  std::size_t second = 0;
  std::uint64_t top_count = 0;
  std::uint64_t second_count = 0;
};

inline VoteSummary summarize_votes(std::span<const std::uint64_t> votes) {
  VoteSummary s;
  std::vector<double> as_scores(votes.begin(), votes.end());
  s.top = argmax(as_scores);
  s.second = runner_up(as_scores, s.top);
  s.top_count = votes[s.top];
  s.second_count = votes[s.second];
  return s;
}

/// Smoothed prediction: the top class, or nullopt (abstain) when the top and
/// runner-up counts are not significantly different at level alpha.
inline std::optional<std::size_t> smooth_predict_from_votes(std::span<const std::uint64_t> votes, double alpha) {
  VoteSummary s = summarize_votes(votes);
  if (binomial_test_p_value(s.top_count, s.second_count) > alpha) return std::nullopt;
  return s.top;
}

inline std::optional<std::size_t> smooth_predict(const ReluNetwork& net, std::span<const double> x,
                                                 const SmoothingConfig& cfg) {
  return smooth_predict_from_votes(smooth_votes(net, x, cfg), cfg.alpha);
}

struct SmoothCertificate {
  std::size_t label = 0;
  double p_a_lower = 0.0;
  std::optional<double> radius;  // nullopt = abstain

  bool abstained() const noexcept { return !radius.has_value(); }
};

/// 0.5 * sigma * (Phi^-1(pA_lower) - Phi^-1(pB_upper)).
inline double smoothing_radius(double sigma_p, double p_a_lower, double p_b_upper) {
  return 0.5 * sigma_p * (phi_inv(p_a_lower) - phi_inv(p_b_upper));
}

/// Certificate from vote counts, bounding the runner-up by 1 - pA_lower so
/// the radius collapses to sigma * Phi^-1(pA_lower).
inline SmoothCertificate smooth_certify_from_votes(std::span<const std::uint64_t> votes, const SmoothingConfig& cfg) {
  VoteSummary s = summarize_votes(votes);
  SmoothCertificate cert;
  cert.label = s.top;
  cert.p_a_lower = clopper_pearson_lower(s.top_count, cfg.m_samples, cfg.alpha);
  if (cert.p_a_lower > 0.5) cert.radius = cfg.sigma_p * phi_inv(cert.p_a_lower);
  return cert;
}

inline SmoothCertificate smooth_certify(const ReluNetwork& net, std::span<const double> x, const SmoothingConfig& cfg) {
  return smooth_certify_from_votes(smooth_votes(net, x, cfg), cfg);
}

}  // namespace fpcert
