#pragma once

// Classifier representations: binary linear models and multiclass ReLU MLPs,
// plus the exact local linearization of a ReLU network around an input.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fpcert/error.hpp"

namespace fpcert {

using Vector = std::vector<double>;

/// Input box [lo, hi] applied to every coordinate.
struct Domain {
  double lo;
  double hi;
};

/// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) throw Error(ErrorCode::DimensionMismatch, "matrix data size != rows*cols");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Round-to-nearest dot product accumulated strictly left to right.
inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double sum_squares(std::span<const double> a) {
  double s = 0.0;
  for (double v : a) s += v * v;
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(sum_squares(a)); }

inline bool all_finite(std::span<const double> a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

struct LinearModel {
  Vector w;
  double b = 0.0;

  std::size_t dim() const noexcept { return w.size(); }

  void validate() const {
    if (w.empty()) throw Error(ErrorCode::DimensionMismatch, "linear model needs D >= 1");
    if (!all_finite(w) || !std::isfinite(b)) throw Error(ErrorCode::NonFiniteInput, "linear model has non-finite entries");
  }

  friend bool operator==(const LinearModel&, const LinearModel&) = default;
};

inline void check_dim(std::size_t expected, std::size_t got, const char* what) {
  if (expected != got)
    throw Error(ErrorCode::DimensionMismatch,
                std::string(what) + ": expected " + std::to_string(expected) + ", got " + std::to_string(got));
}

/// w^T x + b in round-to-nearest, left to right.
inline double linear_score(const LinearModel& m, std::span<const double> x) {
  check_dim(m.dim(), x.size(), "linear_score");
  return dot(m.w, x) + m.b;
}

/// sign(w^T x + b) with sign(0) = +1.
inline int linear_predict(const LinearModel& m, std::span<const double> x) {
  return linear_score(m, x) >= 0.0 ? 1 : -1;
}

/// One affine layer: out = weights * in + bias, weights stored out x in.
struct Layer {
  Matrix weights;
  Vector bias;

  std::size_t in_dim() const noexcept { return weights.cols(); }
  std::size_t out_dim() const noexcept { return weights.rows(); }

  friend bool operator==(const Layer&, const Layer&) = default;
};

/// ReLU on every layer but the last; the last layer emits K class scores.
class ReluNetwork {
 public:
  ReluNetwork() = default;
  explicit ReluNetwork(std::vector<Layer> layers) : layers_(std::move(layers)) { validate(); }

  const std::vector<Layer>& layers() const noexcept { return layers_; }
  std::size_t input_dim() const noexcept { return layers_.front().in_dim(); }
  std::size_t num_classes() const noexcept { return layers_.back().out_dim(); }
  std::size_t depth() const noexcept { return layers_.size(); }

  friend bool operator==(const ReluNetwork&, const ReluNetwork&) = default;

 private:
  void validate() const {
    if (layers_.empty()) throw Error(ErrorCode::DimensionMismatch, "network has no layers");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const Layer& l = layers_[i];
      if (l.in_dim() == 0 || l.out_dim() == 0) throw Error(ErrorCode::DimensionMismatch, "empty layer");
      check_dim(l.out_dim(), l.bias.size(), "layer bias");
      if (i > 0) check_dim(layers_[i - 1].out_dim(), l.in_dim(), "layer input");
      if (!all_finite(l.weights.data()) || !all_finite(l.bias))
        throw Error(ErrorCode::NonFiniteInput, "network has non-finite parameters");
    }
    if (num_classes() < 2) throw Error(ErrorCode::DimensionMismatch, "network needs K >= 2 classes");
  }

  std::vector<Layer> layers_;
};

/// weights * x + bias, each row summed left to right.
inline Vector affine(const Layer& layer, std::span<const double> x) {
  Vector out(layer.out_dim());
  for (std::size_t r = 0; r < out.size(); ++r) out[r] = dot(layer.weights.row(r), x) + layer.bias[r];
  return out;
}

/// Index of the largest score; the lowest index wins ties.
inline std::size_t argmax(std::span<const double> scores) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < scores.size(); ++k)
    if (scores[k] > scores[best]) best = k;
  return best;
}

/// Best class other than `label`; the lowest index wins ties.
inline std::size_t runner_up(std::span<const double> scores, std::size_t label) {
  std::size_t best = label == 0 ? 1 : 0;
  for (std::size_t k = 0; k < scores.size(); ++k)
    if (k != label && scores[k] > scores[best]) best = k;
  return best;
}

struct ForwardResult {
  Vector scores;
  std::size_t label = 0;
};

inline ForwardResult relu_forward(const ReluNetwork& net, std::span<const double> x) {
  check_dim(net.input_dim(), x.size(), "relu_forward");
  Vector h(x.begin(), x.end());
  const auto& layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = affine(layers[i], h);
    if (i + 1 < layers.size())
      for (double& v : h) v = v > 0.0 ? v : 0.0;
  }
  ForwardResult r{std::move(h), 0};
  r.label = argmax(r.scores);
  return r;
}

inline std::size_t relu_predict(const ReluNetwork& net, std::span<const double> x) { return relu_forward(net, x).label; }

/// Per hidden layer, 1 where the pre-activation is strictly positive.
using ActivationPattern = std::vector<std::vector<std::uint8_t>>;

inline ActivationPattern activation_pattern(const ReluNetwork& net, std::span<const double> x) {
  check_dim(net.input_dim(), x.size(), "activation_pattern");
  ActivationPattern pattern;
  Vector h(x.begin(), x.end());
  const auto& layers = net.layers();
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    h = affine(layers[i], h);
    std::vector<std::uint8_t> mask(h.size());
    for (std::size_t j = 0; j < h.size(); ++j) {
      mask[j] = h[j] > 0.0 ? 1 : 0;
      if (!mask[j]) h[j] = 0.0;
    }
    pattern.push_back(std::move(mask));
  }
  return pattern;
}

/// Exact local linear form F(x) = tau * x + tau_hat inside one activation region.
struct Linearization {
  Matrix tau;      // K x D
  Vector tau_hat;  // K
  ActivationPattern pattern;

  Vector evaluate(std::span<const double> x) const {
    check_dim(tau.cols(), x.size(), "linearization evaluate");
    Vector out(tau.rows());
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = dot(tau.row(k), x) + tau_hat[k];
    return out;
  }
};

/// Collapses the network at x. The masked layer weights are multiplied onto
/// the accumulated product starting from the first layer, and the bias term
/// is accumulated the same way (acc <- masked_i * acc + bias_i).
inline Linearization linearize(const ReluNetwork& net, std::span<const double> x) {
  check_dim(net.input_dim(), x.size(), "linearize");
  const auto& layers = net.layers();
  Linearization lin;
  lin.pattern = activation_pattern(net, x);

  Matrix acc = layers[0].weights;
  Vector acc_bias = layers[0].bias;
  for (std::size_t i = 1; i < layers.size(); ++i) {
    const Matrix& theta = layers[i].weights;
    const std::vector<std::uint8_t>& mask = lin.pattern[i - 1];
    Matrix next(theta.rows(), acc.cols());
    Vector next_bias(theta.rows());
    for (std::size_t r = 0; r < theta.rows(); ++r) {
      auto out = next.row(r);
      double b = 0.0;
      for (std::size_t k = 0; k < theta.cols(); ++k) {
        double t = mask[k] ? theta(r, k) : 0.0;
        auto in = acc.row(k);
        for (std::size_t c = 0; c < out.size(); ++c) out[c] += t * in[c];
        b += t * acc_bias[k];
      }
      next_bias[r] = b + layers[i].bias[r];
    }
    acc = std::move(next);
    acc_bias = std::move(next_bias);
  }
  lin.tau = std::move(acc);
  lin.tau_hat = std::move(acc_bias);
  return lin;
}

inline void check_labels(std::size_t k, std::size_t l, std::size_t t) {
  if (l >= k || t >= k) throw Error(ErrorCode::DimensionMismatch, "label out of range");
  if (l == t) throw Error(ErrorCode::SameLabels, "source and target labels coincide");
}

/// tau[t] - tau[l]: the gradient of score_t - score_l inside the region of x.
inline Vector perturb_dir(const Linearization& lin, std::size_t l, std::size_t t) {
  check_labels(lin.tau.rows(), l, t);
  auto rt = lin.tau.row(t);
  auto rl = lin.tau.row(l);
  Vector nu(rt.size());
  for (std::size_t i = 0; i < nu.size(); ++i) nu[i] = rt[i] - rl[i];
  return nu;
}

inline Vector perturb_dir(const ReluNetwork& net, std::span<const double> x, std::size_t l, std::size_t t) {
  check_labels(net.num_classes(), l, t);
  return perturb_dir(linearize(net, x), l, t);
}

/// The binary model L(x) = (tau[t] - tau[l]) x + tau_hat[t] - tau_hat[l];
/// L < 0 while l wins and L > 0 once t wins.
inline LinearModel difference_model(const Linearization& lin, std::size_t l, std::size_t t) {
  return LinearModel{perturb_dir(lin, l, t), lin.tau_hat[t] - lin.tau_hat[l]};
}

}  // namespace fpcert
