#pragma once

// Desk-scale trainers that produce attack targets: an L1-regularized
// squared-hinge linear SVM and small ReLU MLPs, both fit by mini-batch
// SGD with momentum over a seeded shuffle.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <vector>

#include "fpcert/error.hpp"
#include "fpcert/models.hpp"
#include "fpcert/rng.hpp"

namespace fpcert {

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t batch_size = 64;
  std::size_t epochs = 15;
  double l1_lambda = 1e-4;
  bool clamp_nonnegative = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw Error(ErrorCode::InvalidArgument, "learning_rate must be > 0");
    if (epochs < 1 || batch_size < 1) throw Error(ErrorCode::InvalidArgument, "epochs and batch_size must be >= 1");
    if (l1_lambda < 0.0) throw Error(ErrorCode::InvalidArgument, "l1_lambda must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) throw Error(ErrorCode::InvalidArgument, "momentum must lie in [0,1)");
  }
};

struct EpochLog {
  std::size_t epoch = 0;
  double objective = 0.0;  // mean over the epoch's mini-batches
  double accuracy = 0.0;   // on the training data after the epoch
};

namespace detail {

/// Fisher-Yates with the bounded draw from rng.hpp, so the order depends
/// only on the seed.
inline void shuffle(std::vector<std::size_t>& idx, SplitMix64& g) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    std::size_t j = bounded(g, static_cast<std::uint32_t>(i));
    std::swap(idx[i - 1], idx[j]);
  }
}

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::fabs(x));
  return m;
}

}  // namespace detail

struct LinearTrainResult {
  LinearModel model;
  std::vector<EpochLog> log;
};

inline double svm_objective(const LinearModel& m, const Matrix& x, std::span<const long> y, double lambda) {
  double loss = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    double margin = 1.0 - static_cast<double>(y[i]) * linear_score(m, x.row(i));
    if (margin > 0.0) loss += margin * margin;
  }
  double l1 = 0.0;
  for (double w : m.w) l1 += std::fabs(w);
  return loss / static_cast<double>(y.size()) + lambda * l1;
}

inline double linear_accuracy(const LinearModel& m, const Matrix& x, std::span<const long> y) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < y.size(); ++i) ok += linear_predict(m, x.row(i)) == y[i];
  return y.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(y.size());
}

/// Minimizes mean((1 - y(w.x + b))_+^2) + lambda * ||w||_1 by mini-batch
/// subgradient descent with momentum; the L1 subgradient at 0 is 0 and the
/// bias is not regularized. Features are divided by their largest magnitude
/// during training and the weights are mapped back afterwards, so raw pixel
/// data trains with the same step size as unit-scale data.
inline LinearTrainResult train_linear_svm(const Matrix& x, std::span<const long> y, const TrainConfig& cfg) {
  cfg.validate();
  check_dim(x.rows(), y.size(), "train_linear_svm labels");
  bool has_pos = false, has_neg = false;
  for (long l : y) {
    if (l != 1 && l != -1) throw Error(ErrorCode::DegenerateData, "labels must be -1 or +1");
    (l > 0 ? has_pos : has_neg) = true;
  }
  if (!has_pos || !has_neg) throw Error(ErrorCode::DegenerateData, "training data has a single class");

  const std::size_t n = x.rows(), d = x.cols();
  double scale = detail::max_abs(x.data());
  if (scale == 0.0) scale = 1.0;
  Matrix xs(n, d);
  for (std::size_t i = 0; i < x.data().size(); ++i) xs.data()[i] = x.data()[i] / scale;

  LinearModel m{Vector(d, 0.0), 0.0};
  Vector vel(d, 0.0), grad(d);
  double vel_b = 0.0;
  SplitMix64 g(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  LinearTrainResult result;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    detail::shuffle(order, g);
    double obj_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      std::size_t end = std::min(n, start + cfg.batch_size);
      auto bsize = static_cast<double>(end - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      double grad_b = 0.0, loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        std::size_t i = order[k];
        double yi = static_cast<double>(y[i]);
        double margin = 1.0 - yi * linear_score(m, xs.row(i));
        if (margin <= 0.0) continue;
        loss += margin * margin;
        double coef = -2.0 * margin * yi / bsize;
        auto row = xs.row(i);
        for (std::size_t j = 0; j < d; ++j) grad[j] += coef * row[j];
        grad_b += coef;
      }
      double l1 = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        double w = m.w[j];
        l1 += std::fabs(w);
        grad[j] += cfg.l1_lambda * (w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0));
        vel[j] = cfg.momentum * vel[j] - cfg.learning_rate * grad[j];
        m.w[j] += vel[j];
      }
      vel_b = cfg.momentum * vel_b - cfg.learning_rate * grad_b;
      m.b += vel_b;
      obj_sum += loss / bsize + cfg.l1_lambda * l1;
      ++batches;
    }
    result.log.push_back({epoch, obj_sum / static_cast<double>(batches), linear_accuracy(m, xs, y)});
  }
  for (double& w : m.w) w /= scale;
  result.model = std::move(m);
  return result;
}

struct MlpTrainResult {
  ReluNetwork model;
  std::vector<EpochLog> log;
};

inline double mlp_accuracy(const ReluNetwork& net, const Matrix& x, std::span<const long> y) {
  std::size_t ok = 0;
  for (std::size_t i = 0; i < y.size(); ++i) ok += static_cast<long>(relu_predict(net, x.row(i))) == y[i];
  return y.empty() ? 0.0 : static_cast<double>(ok) / static_cast<double>(y.size());
}

/// Softmax cross-entropy on a ReLU MLP with layer sizes
/// input -> hidden[0] -> ... -> num_classes. With clamp_nonnegative every
/// hidden-layer weight and bias is projected onto [0, inf) after each step
/// (the output layer stays free), so nonnegative inputs keep every ReLU in
/// one activation region.
inline MlpTrainResult train_mlp(const Matrix& x, std::span<const long> y, std::span<const std::size_t> hidden,
                                std::size_t num_classes, const TrainConfig& cfg) {
  cfg.validate();
  check_dim(x.rows(), y.size(), "train_mlp labels");
  if (num_classes < 2) throw Error(ErrorCode::DegenerateData, "need at least two classes");
  std::vector<std::size_t> seen(num_classes, 0);
  for (long l : y) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes) throw Error(ErrorCode::DegenerateData, "label out of range");
    ++seen[static_cast<std::size_t>(l)];
  }
  if (std::count_if(seen.begin(), seen.end(), [](std::size_t c) { return c > 0; }) < 2)
    throw Error(ErrorCode::DegenerateData, "training data has a single class");

  std::vector<std::size_t> sizes{x.cols()};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(num_classes);
  const std::size_t n_layers = sizes.size() - 1;

  SplitMix64 g(cfg.seed);
  std::vector<Layer> layers;
  for (std::size_t i = 0; i < n_layers; ++i) {
    Layer l{Matrix(sizes[i + 1], sizes[i]), Vector(sizes[i + 1], 0.0)};
    double bound = std::sqrt(6.0 / static_cast<double>(sizes[i]));  // He-uniform
    bool hidden_layer = i + 1 < n_layers;
    for (double& w : l.weights.data()) {
      w = uniform(g, -bound, bound);
      if (cfg.clamp_nonnegative && hidden_layer) w = std::fabs(w) / static_cast<double>(sizes[i]);
    }
    if (cfg.clamp_nonnegative && hidden_layer) std::fill(l.bias.begin(), l.bias.end(), 0.01);
    layers.push_back(std::move(l));
  }
  std::vector<Layer> vel;
  for (const Layer& l : layers)
    vel.push_back(Layer{Matrix(l.weights.rows(), l.weights.cols()), Vector(l.bias.size(), 0.0)});
  std::vector<Layer> grad = vel;

  const std::size_t n = x.rows();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  MlpTrainResult result;
  std::vector<Vector> acts(n_layers + 1);  // acts[0] = input, acts[i] = output of layer i (post-ReLU)
  std::vector<Vector> deltas(n_layers);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    detail::shuffle(order, g);
    double obj_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      std::size_t end = std::min(n, start + cfg.batch_size);
      auto bsize = static_cast<double>(end - start);
      for (Layer& gl : grad) {
        std::fill(gl.weights.data().begin(), gl.weights.data().end(), 0.0);
        std::fill(gl.bias.begin(), gl.bias.end(), 0.0);
      }
      double loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        std::size_t idx = order[k];
        auto in = x.row(idx);
        acts[0].assign(in.begin(), in.end());
        for (std::size_t i = 0; i < n_layers; ++i) {
          acts[i + 1] = affine(layers[i], acts[i]);
          if (i + 1 < n_layers)
            for (double& v : acts[i + 1]) v = std::max(v, 0.0);
        }
        // softmax cross-entropy
        Vector& logits = acts[n_layers];
        double mx = *std::max_element(logits.begin(), logits.end());
        double z = 0.0;
        for (double v : logits) z += std::exp(v - mx);
        auto target = static_cast<std::size_t>(y[idx]);
        loss += -(logits[target] - mx - std::log(z));
        deltas[n_layers - 1].resize(num_classes);
        for (std::size_t c = 0; c < num_classes; ++c)
          deltas[n_layers - 1][c] = (std::exp(logits[c] - mx) / z - (c == target ? 1.0 : 0.0)) / bsize;
        for (std::size_t i = n_layers; i-- > 0;) {
          const Vector& dl = deltas[i];
          const Vector& a = acts[i];
          for (std::size_t r = 0; r < dl.size(); ++r) {
            if (dl[r] == 0.0) continue;
            auto grow = grad[i].weights.row(r);
            for (std::size_t c = 0; c < a.size(); ++c) grow[c] += dl[r] * a[c];
            grad[i].bias[r] += dl[r];
          }
          if (i == 0) break;
          Vector& prev = deltas[i - 1];
          prev.assign(layers[i].in_dim(), 0.0);
          for (std::size_t r = 0; r < dl.size(); ++r) {
            if (dl[r] == 0.0) continue;
            auto wrow = layers[i].weights.row(r);
            for (std::size_t c = 0; c < prev.size(); ++c) prev[c] += dl[r] * wrow[c];
          }
          for (std::size_t c = 0; c < prev.size(); ++c)
            if (!(acts[i][c] > 0.0)) prev[c] = 0.0;
        }
      }
      for (std::size_t i = 0; i < n_layers; ++i) {
        auto step = [&](std::vector<double>& p, std::vector<double>& v, const std::vector<double>& gr) {
          for (std::size_t j = 0; j < p.size(); ++j) {
            v[j] = cfg.momentum * v[j] - cfg.learning_rate * gr[j];
            p[j] += v[j];
          }
        };
        step(layers[i].weights.data(), vel[i].weights.data(), grad[i].weights.data());
        step(layers[i].bias, vel[i].bias, grad[i].bias);
        if (cfg.clamp_nonnegative && i + 1 < n_layers) {
          for (double& w : layers[i].weights.data()) w = std::max(w, 0.0);
          for (double& b : layers[i].bias) b = std::max(b, 0.0);
        }
      }
      obj_sum += loss / bsize;
      ++batches;
    }
    ReluNetwork snapshot(layers);
    result.log.push_back({epoch, obj_sum / static_cast<double>(batches), mlp_accuracy(snapshot, x, y)});
  }
  result.model = ReluNetwork(std::move(layers));
  return result;
}

}  // namespace fpcert
