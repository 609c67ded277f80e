// Certifies one random linear classifier and attacks it at two radii: the
// round-to-nearest radius, where rounding often lets an attack through, and
// the sound lower bound.
#include <cstdio>

#include "fpcert/attack.hpp"
#include "fpcert/certify.hpp"
#include "fpcert/data_io.hpp"

int main() {
  using namespace fpcert;
  const std::size_t dim = 50;
  LinearCase c = gen_random_linear_case(dim, 2024);
  CertificateReport rep = certify_linear(c.model, c.x);
  std::printf("D=%zu  r_tilde=%.17g\n       r_lo   =%.17g\n       r_hi   =%.17g\n", dim, rep.r_tilde, rep.r_lo,
              rep.r_hi);

  AttackBudget budget;
  budget.n_neighbors_total = dim * dim;
  budget.seed = 1;
  for (auto [name, r] : {std::pair{"r_tilde", rep.r_tilde}, std::pair{"r_lo", rep.r_lo}}) {
    AttackOutcome out = attack_linear_at(c.model, c.x, r, budget);
    std::printf("attack at %-7s: %s after %llu candidates", name, to_string(out.status),
                static_cast<unsigned long long>(out.candidates_tested));
    if (out.result) std::printf(" (|delta| = %.17g)", out.result->delta_norm);
    std::printf("\n");
  }
}
