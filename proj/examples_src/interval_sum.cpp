// Round-to-nearest summation loses a small term to cancellation; the
// interval dot product still encloses the real sum.
#include <cstdio>
#include <vector>

#include "fpcert/interval.hpp"

int main() {
  using namespace fpcert;
  std::vector<double> terms{2e-30, 1e30, -1e30, -1e-30};
  std::vector<double> ones(terms.size(), 1.0);
  double nearest = 0.0;
  for (double t : terms) nearest += t;
  Interval iv = iv_dot(std::span<const double>(terms), std::span<const double>(ones));
  std::printf("real sum       1e-30\n");
  std::printf("round-nearest  %g\n", nearest);
  std::printf("interval       [%g, %g]  contains real sum: %s\n", iv.lo(), iv.hi(), iv.contains(1e-30) ? "yes" : "no");

  Interval third = iv_div(Interval(1.0), Interval(3.0));
  std::printf("1/3 enclosed in [%a, %a]\n", third.lo(), third.hi());
}
