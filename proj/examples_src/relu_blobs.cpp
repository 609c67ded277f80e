// Trains a small clamped ReLU network on two Gaussian blobs, then certifies
// and attacks the first few points through the locally linear model.
#include <cstdio>

#include "fpcert/attack.hpp"
#include "fpcert/certify.hpp"
#include "fpcert/data_io.hpp"
#include "fpcert/train.hpp"

int main() {
  using namespace fpcert;
  Dataset ds = gen_gaussian_blobs(100, 2, 2, 4.0, 0.5, 5, 2.0);
  const std::size_t hidden[] = {16, 16};
  TrainConfig cfg;
  cfg.clamp_nonnegative = true;
  cfg.seed = 2;
  ReluNetwork net = train_mlp(ds.features, ds.labels, hidden, 2, cfg).model;
  std::printf("train accuracy %.3f\n", mlp_accuracy(net, ds.features, ds.labels));

  AttackBudget budget;
  budget.n_neighbors_total = 100;
  for (std::size_t i = 0; i < 5; ++i) {
    std::span<const double> x = ds.row(i);
    ForwardResult f = relu_forward(net, x);
    LinearModel diff = difference_model(linearize(net, x), f.label, runner_up(f.scores, f.label));
    CertificateReport rep = certify_linear(diff, x);
    budget.seed = i;
    AttackOutcome out = attack_linear_at(diff, x, rep.r_lo, budget);
    std::printf("row %zu label %zu  r_lo %.6g  r_tilde %.6g  attack at r_lo: %s\n", i, f.label, rep.r_lo, rep.r_tilde,
                to_string(out.status));
  }
}
