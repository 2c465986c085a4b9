#include "gcagc/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "gcagc/error.hpp"

namespace gcagc {

GradCheckResult finite_diff_check(const ScalarFunction& f, const Tensor& x, double h) {
  Tensor leaf = x.clone(true);
  Tensor y = f(leaf);
  if (y.numel() != 1) throw UsageError("finite_diff_check: function must be scalar-valued");
  y.backward();
  std::vector<double> analytic(leaf.numel(), 0.0);
  if (leaf.has_grad()) std::copy(leaf.grad().begin(), leaf.grad().end(), analytic.begin());

  GradCheckResult result;
  Tensor probe = x.clone(false);
  auto data = probe.mutable_data();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double saved = data[i];
    // Divide by the representable step actually taken, not 2h.
    const double up = saved + h, down = saved - h;
    data[i] = up;
    const double plus = f(probe).item();
    data[i] = down;
    const double minus = f(probe).item();
    data[i] = saved;
    const double fd = (plus - minus) / (up - down);
    const double ad = analytic[i];
    const double err = std::abs(fd - ad) / std::max(1e-8, std::abs(fd) + std::abs(ad));
    if (err > result.max_rel_error || i == 0) {
      result = {std::max(err, result.max_rel_error), i, fd, ad};
    }
  }
  return result;
}

}  // namespace gcagc
