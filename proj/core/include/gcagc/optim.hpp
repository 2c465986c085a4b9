#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "gcagc/params.hpp"

namespace gcagc {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 5e-4;  // added to the gradient as wd * theta
};

/// Moment accumulators for every parameter of one ParameterSet, in its order.
struct AdamState {
  std::vector<std::vector<double>> m, v;
  std::uint64_t step = 0;

  static AdamState for_params(const ParameterSet& params);
};

/// One bias-corrected Adam update with coupled weight decay. Parameters
/// without a gradient are treated as having a zero gradient.
void adam_step(ParameterSet& params, AdamState& state, double lr, const AdamConfig& cfg = {});

struct LrSchedule {
  double base = 1e-4;
  std::uint64_t period = 25000;  // halve every `period` steps

  double at(std::uint64_t step) const;
};

}  // namespace gcagc
