#pragma once

// Rounding-search attacks.
//
// A seed perturbation is aimed at the decision boundary and scaled to the
// certified radius; the search then samples vectors whose coordinates are
// the seed coordinates or one of their n nearest floating-point neighbours,
// keeping any candidate whose round-to-nearest norm still fits inside the
// radius while the victim's label changes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fpcert/certify.hpp"
#include "fpcert/error.hpp"
#include "fpcert/fp_core.hpp"
#include "fpcert/models.hpp"
#include "fpcert/rng.hpp"
#include "fpcert/smoothing.hpp"

namespace fpcert {

struct AttackBudget {
  std::uint64_t n_neighbors_total = 1000;  // N
  std::uint32_t n_steps_per_side = 2;      // n
  std::uint64_t seed = 0;
  std::uint64_t max_pgd_iters = 1'000'000;
  double pgd_step = 1e-5;                  // s
  bool count_all = false;  // keep scanning after the first success

  void validate() const {
    if (n_neighbors_total == 0 || n_steps_per_side == 0 || max_pgd_iters == 0)
      throw Error(ErrorCode::InvalidArgument, "attack budget entries must be positive");
    if (!(pgd_step > 0.0) || !std::isfinite(pgd_step))
      throw Error(ErrorCode::InvalidArgument, "pgd_step must be positive and finite");
  }
};

enum class AttackStatus { Success, NotFound, PatternMismatch, AbstainedTarget, ZeroDirection };

inline const char* to_string(AttackStatus s) {
  switch (s) {
    case AttackStatus::Success: return "success";
    case AttackStatus::NotFound: return "not_found";
    case AttackStatus::PatternMismatch: return "pattern_mismatch";
    case AttackStatus::AbstainedTarget: return "abstained_target";
    case AttackStatus::ZeroDirection: return "zero_direction";
  }
  return "unknown";
}

struct AttackResult {
  Vector x_prime;      // clip(x + delta_prime)
  Vector delta_prime;  // the sampled neighbour
  double delta_norm = 0.0;  // norm of x' - x if clipping moved x', else of delta_prime
  double threshold = 0.0;
  long label_before = 0;
  long label_after = 0;
  std::uint64_t candidate_index = 0;  // position in the neighbour stream
};

struct AttackOutcome {
  AttackStatus status = AttackStatus::NotFound;
  std::optional<AttackResult> result;  // first success
  std::uint64_t candidates_tested = 0;
  std::uint64_t successes = 0;  // all successes when count_all is set
  double threshold = 0.0;

  bool success() const noexcept { return status == AttackStatus::Success; }
};

/// sign * (r / ||nu||) * nu in round-to-nearest.
inline Vector scale_to_radius(std::span<const double> nu, double r, int sign_to_boundary) {
  double n = norm2(nu);
  if (!(n > 0.0) || !std::isfinite(n)) throw Error(ErrorCode::ZeroDirection, "direction has zero or non-finite norm");
  if (r < 0.0) throw Error(ErrorCode::InvalidArgument, "radius must be >= 0");
  double scale = r / n;
  Vector delta(nu.size());
  for (std::size_t i = 0; i < nu.size(); ++i) {
    delta[i] = scale * nu[i];
    if (sign_to_boundary < 0) delta[i] = -delta[i];
  }
  return delta;
}

/// Per-coordinate candidate sets {seed_i} plus n neighbours on each side,
/// and a seeded stream of vectors sampling each coordinate uniformly from
/// its set. Steps that would leave the finite range are dropped.
class NeighborSampler {
 public:
  NeighborSampler(std::span<const double> seed, std::uint32_t n, std::uint64_t rng_seed) : rng_(rng_seed) {
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "n must be >= 1");
    if (!all_finite(seed)) throw Error(ErrorCode::NonFiniteInput, "seed perturbation has non-finite entries");
    offsets_.reserve(seed.size() + 1);
    offsets_.push_back(0);
    for (double s : seed) {
      std::vector<double> below;
      double v = s;
      for (std::uint32_t j = 0; j < n; ++j) {
        double d = fp::raw_down(v);
        if (!fp::is_finite_bits(d)) break;
        below.push_back(v = d);
      }
      values_.insert(values_.end(), below.rbegin(), below.rend());
      values_.push_back(s);
      v = s;
      for (std::uint32_t j = 0; j < n; ++j) {
        double u = fp::raw_up(v);
        if (!fp::is_finite_bits(u)) break;
        values_.push_back(v = u);
      }
      offsets_.push_back(values_.size());
    }
  }

  std::size_t dim() const noexcept { return offsets_.size() - 1; }

  /// Sorted candidate set of coordinate i.
  std::span<const double> candidates(std::size_t i) const {
    return {values_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }

  void draw(std::span<double> out) {
    for (std::size_t i = 0; i < out.size(); ++i) {
      auto size = static_cast<std::uint32_t>(offsets_[i + 1] - offsets_[i]);
      out[i] = values_[offsets_[i] + bounded(rng_, size)];
    }
  }

  Vector draw() {
    Vector v(dim());
    draw(v);
    return v;
  }

 private:
  SplitMix64 rng_;
  std::vector<double> values_;
  std::vector<std::size_t> offsets_;
};

/// N sampled neighbours of delta.
inline std::vector<Vector> fp_neighbors(std::span<const double> delta, const AttackBudget& budget) {
  budget.validate();
  NeighborSampler sampler(delta, budget.n_steps_per_side, budget.seed);
  std::vector<Vector> out;
  out.reserve(budget.n_neighbors_total);
  for (std::uint64_t j = 0; j < budget.n_neighbors_total; ++j) out.push_back(sampler.draw());
  return out;
}

inline double clip(double v, const Domain& d) { return std::min(std::max(v, d.lo), d.hi); }

/// Builds x' = clip(x + delta') and the perturbation the victim would see.
/// Without clipping the perturbation is delta' itself; when clipping moved a
/// coordinate it is recomputed as x' - x.
inline double materialize_candidate(std::span<const double> x, std::span<const double> delta_prime,
                                    const std::optional<Domain>& domain, std::span<double> x_prime,
                                    std::span<double> effective) {
  bool clipped = false;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double v = x[i] + delta_prime[i];
    if (domain) {
      double c = clip(v, *domain);
      clipped |= c != v;
      v = c;
    }
    x_prime[i] = v;
  }
  if (!clipped) {
    std::copy(delta_prime.begin(), delta_prime.end(), effective.begin());
  } else {
    for (std::size_t i = 0; i < x.size(); ++i) effective[i] = x_prime[i] - x[i];
  }
  return norm2(effective);
}

/// Samples N neighbours of `seed_delta` and tests each against the victim.
/// `predict` maps a candidate input to a label (long); success requires
/// norm <= threshold and predict(x') != label_before.
template <class Predict>
AttackOutcome rounding_search(std::span<const double> x, std::span<const double> seed_delta, double threshold,
                              long label_before, const AttackBudget& budget, const std::optional<Domain>& domain,
                              Predict&& predict) {
  budget.validate();
  check_dim(x.size(), seed_delta.size(), "rounding_search");
  AttackOutcome out;
  out.threshold = threshold;
  NeighborSampler sampler(seed_delta, budget.n_steps_per_side, budget.seed);
  Vector delta_prime(x.size()), x_prime(x.size()), effective(x.size());
  for (std::uint64_t j = 0; j < budget.n_neighbors_total; ++j) {
    sampler.draw(delta_prime);
    ++out.candidates_tested;
    double norm;
    if (!domain) {
      // Norm test first: most candidates never need x'.
      norm = norm2(delta_prime);
      if (!(norm <= threshold)) continue;
      for (std::size_t i = 0; i < x.size(); ++i) x_prime[i] = x[i] + delta_prime[i];
    } else {
      norm = materialize_candidate(x, delta_prime, domain, x_prime, effective);
      if (!(norm <= threshold)) continue;
    }
    long after = predict(std::span<const double>(x_prime));
    if (after == label_before) continue;
    ++out.successes;
    if (!out.result) {
      out.status = AttackStatus::Success;
      out.result = AttackResult{x_prime, delta_prime, norm, threshold, label_before, after, j};
    }
    if (!budget.count_all) break;
  }
  return out;
}

/// Rounding search against a linear model at an arbitrary threshold radius
/// (R~ for the plain attack, R_lo to exercise the mitigation). The seed is
/// w scaled to the threshold and pointed toward the boundary.
inline AttackOutcome attack_linear_at(const LinearModel& m, std::span<const double> x, double threshold,
                                      const AttackBudget& budget, const std::optional<Domain>& domain = std::nullopt) {
  check_dim(m.dim(), x.size(), "attack_linear");
  long before = linear_predict(m, x);
  Vector delta = scale_to_radius(m.w, threshold, before > 0 ? -1 : 1);
  return rounding_search(x, delta, threshold, before, budget, domain,
                         [&m](std::span<const double> xp) -> long { return linear_predict(m, xp); });
}

inline AttackOutcome attack_linear(const LinearModel& m, std::span<const double> x, const AttackBudget& budget,
                                   const std::optional<Domain>& domain = std::nullopt) {
  return attack_linear_at(m, x, exact_radius_linear(m, x), budget, domain);
}

/// Replays a reported success from scratch: x' must equal clip(x + delta'),
/// the perturbation the victim sees must have norm <= threshold, and the
/// predictor must disagree with label_before.
template <class Predict>
bool replay_is_valid(std::span<const double> x, const AttackResult& r, const std::optional<Domain>& domain,
                     Predict&& predict) {
  if (r.x_prime.size() != x.size() || r.delta_prime.size() != x.size()) return false;
  Vector xp(x.size()), effective(x.size());
  double norm = materialize_candidate(x, r.delta_prime, domain, xp, effective);
  if (xp != r.x_prime) return false;
  if (domain)
    for (double v : xp)
      if (v < domain->lo || v > domain->hi) return false;
  if (!(norm <= r.threshold) || norm != r.delta_norm) return false;
  long before = predict(x);
  long after = predict(std::span<const double>(xp));
  return before == r.label_before && after == r.label_after && after != before;
}

/// Largest radius in [r_lo, r_hi] at which the rounding search (with this
/// budget) finds no adversarial example for the linear model.
inline double rhat_search(const LinearModel& m, std::span<const double> x, double r_lo, double r_hi,
                          const AttackBudget& budget) {
  return rhat_search(r_lo, r_hi, [&](double r) {
    if (r == 0.0) return false;
    return attack_linear_at(m, x, r, budget).success();
  });
}

enum class PgdStatus { Found, NotFound, ZeroDirection };

struct PgdOutcome {
  PgdStatus status = PgdStatus::NotFound;
  Vector delta;  // x_end - x
  Vector x_end;
  std::uint64_t iterations = 0;
};

/// Gradient of score_t - score_l at x (tau[t] - tau[l] of the local
/// linearization) as a vector-Jacobian product. Same quantity as
/// perturb_dir without forming the K x D product.
inline Vector score_difference_gradient(const ReluNetwork& net, std::span<const double> x, std::size_t l,
                                        std::size_t t) {
  check_labels(net.num_classes(), l, t);
  ActivationPattern pattern = activation_pattern(net, x);
  const auto& layers = net.layers();
  Vector g(net.num_classes(), 0.0);
  g[t] = 1.0;
  g[l] = -1.0;
  for (std::size_t i = layers.size(); i-- > 0;) {
    const Matrix& w = layers[i].weights;
    Vector next(w.cols(), 0.0);
    for (std::size_t r = 0; r < w.rows(); ++r) {
      if (g[r] == 0.0) continue;
      auto row = w.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) next[c] += g[r] * row[c];
    }
    if (i > 0)
      for (std::size_t c = 0; c < next.size(); ++c)
        if (!pattern[i - 1][c]) next[c] = 0.0;
    g = std::move(next);
  }
  return g;
}

/// Linearized projected gradient steps of length s along the current
/// score-difference gradient until the label becomes t or the iteration cap
/// is reached.
inline PgdOutcome relu_pgd(const ReluNetwork& net, std::span<const double> x, std::size_t l, std::size_t t,
                           const AttackBudget& budget, const std::optional<Domain>& domain = std::nullopt) {
  budget.validate();
  check_labels(net.num_classes(), l, t);
  check_dim(net.input_dim(), x.size(), "relu_pgd");
  PgdOutcome out;
  Vector xp(x.begin(), x.end());
  while (out.iterations < budget.max_pgd_iters) {
    Vector nu = score_difference_gradient(net, xp, l, t);
    double n = norm2(nu);
    if (!(n > 0.0)) {
      out.status = PgdStatus::ZeroDirection;
      break;
    }
    double scale = budget.pgd_step / n;
    bool moved = false;
    for (std::size_t i = 0; i < xp.size(); ++i) {
      double v = xp[i] + scale * nu[i];
      if (domain) v = clip(v, *domain);
      moved |= v != xp[i];
      xp[i] = v;
    }
    ++out.iterations;
    // Pinned against the box: every later step would be the same no-op.
    if (!moved) break;
    if (relu_predict(net, xp) == t) {
      out.status = PgdStatus::Found;
      break;
    }
  }
  out.delta.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out.delta[i] = xp[i] - x[i];
  out.x_end = std::move(xp);
  return out;
}

/// ReLU attack with an exact radius: PGD toward the runner-up class; if the
/// activation pattern at the endpoint equals the one at x the network is a
/// single linear model along the way, the radius of the difference model is
/// exact, and the rounding search runs around the rescaled direction.
inline AttackOutcome attack_relu_exact(const ReluNetwork& net, std::span<const double> x, const AttackBudget& budget,
                                       const std::optional<Domain>& domain = std::nullopt) {
  ForwardResult fwd = relu_forward(net, x);
  std::size_t l = fwd.label;
  std::size_t t = runner_up(fwd.scores, l);
  AttackOutcome out;
  PgdOutcome pgd = relu_pgd(net, x, l, t, budget, domain);
  if (pgd.status == PgdStatus::ZeroDirection) {
    out.status = AttackStatus::ZeroDirection;
    return out;
  }
  if (pgd.status != PgdStatus::Found) return out;
  std::optional<double> r = exact_radius_relu_matched(net, x, l, t, activation_pattern(net, pgd.x_end));
  if (!r) {
    out.status = AttackStatus::PatternMismatch;
    return out;
  }
  LinearModel diff = difference_model(linearize(net, x), l, t);
  Vector delta = scale_to_radius(diff.w, *r, linear_predict(diff, x) > 0 ? -1 : 1);
  return rounding_search(x, delta, *r, static_cast<long>(l), budget, domain,
                         [&net](std::span<const double> xp) -> long { return static_cast<long>(relu_predict(net, xp)); });
}

/// Attack on a smoothed classifier: PGD against the base network gives a
/// direction, which is rescaled to the smoothing radius and searched with
/// every candidate judged by the smoothed prediction (same noise seed).
/// An abstaining smoothed prediction does not count as a label change.
inline AttackOutcome attack_smoothed(const ReluNetwork& net, std::span<const double> x, const SmoothingConfig& cfg,
                                     const AttackBudget& budget, const std::optional<Domain>& domain = std::nullopt) {
  AttackOutcome out;
  SmoothCertificate cert = smooth_certify(net, x, cfg);
  if (cert.abstained()) {
    out.status = AttackStatus::AbstainedTarget;
    return out;
  }
  out.threshold = *cert.radius;
  ForwardResult fwd = relu_forward(net, x);
  std::size_t l = fwd.label;
  std::size_t t = runner_up(fwd.scores, l);
  PgdOutcome pgd = relu_pgd(net, x, l, t, budget, domain);
  if (pgd.status == PgdStatus::ZeroDirection) {
    out.status = AttackStatus::ZeroDirection;
    return out;
  }
  if (pgd.status != PgdStatus::Found) return out;
  Vector delta = scale_to_radius(pgd.delta, *cert.radius, 1);
  return rounding_search(x, delta, *cert.radius, static_cast<long>(cert.label), budget, domain,
                         [&](std::span<const double> xp) -> long {
                           auto label = smooth_predict(net, xp, cfg);
                           return label ? static_cast<long>(*label) : static_cast<long>(cert.label);
                         });
}

}  // namespace fpcert
