#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "fpcert/data_io.hpp"
#include "fpcert/train.hpp"
#include "test_util.hpp"

using fpcert::Dataset;
using fpcert::ErrorCode;
using fpcert::Matrix;
using fpcert::ReluNetwork;
using fpcert::TrainConfig;
using testutil::code_of;

namespace {

// y = -1 on x in [-3,-1], y = +1 on x in [1,3].
struct Clusters {
  Matrix x;
  std::vector<long> y;
};

Clusters two_clusters(std::size_t n, std::uint64_t seed) {
  fpcert::SplitMix64 g(seed);
  Clusters c{Matrix(n, 1), std::vector<long>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    bool pos = i % 2 == 0;
    double mag = fpcert::uniform(g, 1.0, 3.0);
    c.x(i, 0) = pos ? mag : -mag;
    c.y[i] = pos ? 1 : -1;
  }
  return c;
}

double l1(const std::vector<double>& w) {
  double s = 0.0;
  for (double v : w) s += std::fabs(v);
  return s;
}

// Nonnegative two-class blobs in 2-D.
Dataset blobs() { return fpcert::gen_gaussian_blobs(100, 2, 2, 4.0, 0.5, 5, 2.0); }

void expect_hidden_nonnegative(const ReluNetwork& net) {
  const auto& layers = net.layers();
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    for (double w : layers[i].weights.data()) ASSERT_GE(w, 0.0);
    for (double b : layers[i].bias) ASSERT_GE(b, 0.0);
  }
}

}  // namespace

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.learning_rate = 0.0;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::InvalidArgument);
  c = TrainConfig{};
  c.epochs = 0;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::InvalidArgument);
  c = TrainConfig{};
  c.batch_size = 0;
  EXPECT_EQ(code_of([&] { c.validate(); }), ErrorCode::InvalidArgument);
}

TEST(TrainLinearSvm, SeparatesOneDimensionalClusters) {
  auto c = two_clusters(200, 1);
  auto res = fpcert::train_linear_svm(c.x, c.y, TrainConfig{});
  EXPECT_EQ(fpcert::linear_accuracy(res.model, c.x, c.y), 1.0);
  EXPECT_GT(res.model.w[0], 0.0);
  EXPECT_LT(res.log.back().objective, res.log.front().objective);
}

TEST(TrainLinearSvm, LargeLambdaShrinksWeights) {
  auto c = two_clusters(200, 2);
  TrainConfig free, heavy;
  free.l1_lambda = 0.0;
  heavy.l1_lambda = 1e3;
  heavy.learning_rate = 1e-5;
  free.learning_rate = 1e-5;
  double w_free = l1(fpcert::train_linear_svm(c.x, c.y, free).model.w);
  double w_heavy = l1(fpcert::train_linear_svm(c.x, c.y, heavy).model.w);
  EXPECT_LT(w_heavy, w_free);
}

TEST(TrainLinearSvm, RejectsBadLabels) {
  Matrix x(3, 1, {1.0, 2.0, 3.0});
  EXPECT_EQ(code_of([&] { fpcert::train_linear_svm(x, std::vector<long>{1, 1, 1}, TrainConfig{}); }),
            ErrorCode::DegenerateData);
  EXPECT_EQ(code_of([&] { fpcert::train_linear_svm(x, std::vector<long>{1, 0, -1}, TrainConfig{}); }),
            ErrorCode::DegenerateData);
  EXPECT_EQ(code_of([&] { fpcert::train_linear_svm(x, std::vector<long>{1, -1}, TrainConfig{}); }),
            ErrorCode::DimensionMismatch);
}

TEST(TrainLinearSvm, DeterministicUnderSeed) {
  auto c = two_clusters(150, 3);
  TrainConfig cfg;
  cfg.seed = 9;
  auto a = fpcert::train_linear_svm(c.x, c.y, cfg);
  auto b = fpcert::train_linear_svm(c.x, c.y, cfg);
  EXPECT_EQ(fpcert::model_to_json(a.model), fpcert::model_to_json(b.model));
  cfg.seed = 10;
  EXPECT_NE(fpcert::train_linear_svm(c.x, c.y, cfg).model.w, a.model.w);
}

TEST(TrainMlp, BlobsReachNinetyNinePercent) {
  Dataset ds = blobs();
  std::vector<std::size_t> hidden{16, 16};
  TrainConfig cfg;
  cfg.seed = 1;
  auto res = fpcert::train_mlp(ds.features, ds.labels, hidden, 2, cfg);
  EXPECT_GE(fpcert::mlp_accuracy(res.model, ds.features, ds.labels), 0.99);
  EXPECT_LT(res.log.back().objective, res.log.front().objective);
}

TEST(TrainMlp, ClampedNetIsSingleLinearRegionOnTrainingSet) {
  Dataset ds = blobs();
  std::vector<std::size_t> hidden{16, 16};
  TrainConfig cfg;
  cfg.clamp_nonnegative = true;
  cfg.seed = 2;
  auto res = fpcert::train_mlp(ds.features, ds.labels, hidden, 2, cfg);
  expect_hidden_nonnegative(res.model);
  auto ref = fpcert::linearize(res.model, ds.row(0));
  for (std::size_t i = 1; i < ds.size(); ++i) {
    auto lin = fpcert::linearize(res.model, ds.row(i));
    ASSERT_EQ(lin.tau, ref.tau) << i;
    ASSERT_EQ(lin.tau_hat, ref.tau_hat) << i;
  }
  EXPECT_LT(res.log.back().objective, res.log.front().objective);
}

TEST(TrainMlp, ClampHoldsAfterEveryStep) {
  // With one batch per epoch, training for k epochs yields exactly the
  // parameters after step k of a longer run.
  Dataset ds = blobs();
  std::vector<std::size_t> hidden{8};
  TrainConfig cfg;
  cfg.clamp_nonnegative = true;
  cfg.batch_size = ds.size();
  cfg.learning_rate = 0.5;
  cfg.seed = 3;
  for (std::size_t k = 1; k <= 30; ++k) {
    cfg.epochs = k;
    expect_hidden_nonnegative(fpcert::train_mlp(ds.features, ds.labels, hidden, 2, cfg).model);
  }
}

TEST(TrainMlp, DeterministicUnderSeed) {
  Dataset ds = blobs();
  std::vector<std::size_t> hidden{8};
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 4;
  auto a = fpcert::train_mlp(ds.features, ds.labels, hidden, 2, cfg);
  auto b = fpcert::train_mlp(ds.features, ds.labels, hidden, 2, cfg);
  EXPECT_EQ(fpcert::model_to_json(a.model), fpcert::model_to_json(b.model));
}

TEST(TrainMlp, RejectsDegenerateData) {
  Matrix x(2, 1, {1.0, 2.0});
  std::vector<std::size_t> hidden{2};
  EXPECT_EQ(code_of([&] { fpcert::train_mlp(x, std::vector<long>{0, 0}, hidden, 2, TrainConfig{}); }),
            ErrorCode::DegenerateData);
  EXPECT_EQ(code_of([&] { fpcert::train_mlp(x, std::vector<long>{0, 2}, hidden, 2, TrainConfig{}); }),
            ErrorCode::DegenerateData);
  EXPECT_EQ(code_of([&] { fpcert::train_mlp(x, std::vector<long>{0, 1}, hidden, 1, TrainConfig{}); }),
            ErrorCode::DegenerateData);
}
