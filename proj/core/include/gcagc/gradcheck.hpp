#pragma once

#include <cstddef>
#include <functional>

#include "gcagc/tensor.hpp"

namespace gcagc {

/// Scalar-valued function of one tensor, evaluated repeatedly by the checker.
using ScalarFunction = std::function<Tensor(const Tensor&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;  // flat coordinate of the worst disagreement
  double numeric = 0.0;         // central-difference gradient there
  double analytic = 0.0;        // reverse-mode gradient there
};

/// Compares the reverse-mode gradient of `f` at `x` with central differences
/// (f(x + h e_i) - f(x - h e_i)) / 2h, coordinate by coordinate. The error of
/// a coordinate is |fd - ad| / max(1e-8, |fd| + |ad|).
GradCheckResult finite_diff_check(const ScalarFunction& f, const Tensor& x, double h = 1e-5);

}  // namespace gcagc
