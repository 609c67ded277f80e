#pragma once

// Certified radii for linear models and ReLU networks.
//
// exact_radius_linear is the ordinary round-to-nearest computation that an
// unsuspecting implementation would ship; sound_radius_linear evaluates the
// same formula over intervals and its lower bound is a sound certificate.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>

#include "fpcert/error.hpp"
#include "fpcert/fp_core.hpp"
#include "fpcert/interval.hpp"
#include "fpcert/models.hpp"

namespace fpcert {

struct CertificateReport {
  double r_tilde = 0.0;
  double r_lo = 0.0;
  double r_hi = 0.0;
  std::optional<double> r_hat;
};

/// |w^T x + b| / ||w|| with naive left-to-right round-to-nearest sums.
inline double exact_radius_linear(const LinearModel& m, std::span<const double> x) {
  double score = linear_score(m, x);
  double norm = norm2(m.w);
  if (norm == 0.0) throw Error(ErrorCode::ZeroWeightNorm, "||w|| evaluates to 0");
  return std::fabs(score) / norm;
}

/// [R_lo, R_hi] enclosing the real radius; R_lo is the sound certificate.
template <class R = DefaultRounding>
Interval sound_radius_linear(const LinearModel& m, std::span<const double> x) {
  check_dim(m.dim(), x.size(), "sound_radius_linear");
  Interval score = iv_add<R>(iv_dot<R>(std::span<const double>(m.w), x), Interval(m.b));
  Interval norm = iv_norm2<R>(std::span<const double>(m.w));
  return iv_div<R>(iv_abs(score), norm);
}

template <class R = DefaultRounding>
CertificateReport certify_linear(const LinearModel& m, std::span<const double> x) {
  Interval iv = sound_radius_linear<R>(m, x);
  return CertificateReport{exact_radius_linear(m, x), iv.lo(), iv.hi(), std::nullopt};
}

/// Exact radius of a ReLU network at x toward class t, valid only when the
/// activation pattern at x equals the one observed at the adversarial
/// endpoint; otherwise the network is not linear along the path and no value
/// is returned.
inline std::optional<double> exact_radius_relu_matched(const ReluNetwork& net, std::span<const double> x,
                                                       std::size_t l, std::size_t t,
                                                       const ActivationPattern& endpoint_pattern) {
  Linearization lin = linearize(net, x);
  check_labels(net.num_classes(), l, t);
  if (lin.pattern != endpoint_pattern) return std::nullopt;
  return exact_radius_linear(difference_model(lin, l, t), x);
}

/// True when the oracle finds a violation at radius r.
using RadiusOracle = std::function<bool(double r)>;

/// Largest radius in [r_lo, r_hi] at which the oracle finds nothing, by
/// bisection over the ordered bit patterns of non-negative doubles. The
/// lower end is assumed safe. Stops once the bracket holds adjacent floats
/// or after 64 bisections.
inline double rhat_search(double r_lo, double r_hi, const RadiusOracle& attack_succeeds) {
  if (!(r_lo <= r_hi) || r_lo < 0.0 || !std::isfinite(r_hi))
    throw Error(ErrorCode::InvalidBracket, "rhat_search needs 0 <= r_lo <= r_hi < inf");
  if (!attack_succeeds(r_hi)) return r_hi;
  std::uint64_t safe = fp::to_bits(r_lo + 0.0);  // canonicalise -0
  std::uint64_t broken = fp::to_bits(r_hi);
  for (int i = 0; i < 64 && broken - safe > 1; ++i) {
    std::uint64_t mid = safe + (broken - safe) / 2;
    if (attack_succeeds(fp::from_bits(mid)))
      broken = mid;
    else
      safe = mid;
  }
  return fp::from_bits(safe);
}

}  // namespace fpcert
