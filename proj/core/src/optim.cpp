#include "gcagc/optim.hpp"

#include <cmath>

#include "gcagc/error.hpp"

namespace gcagc {

AdamState AdamState::for_params(const ParameterSet& params) {
  AdamState s;
  for (const auto& [name, t] : params.entries()) {
    s.m.emplace_back(t.numel(), 0.0);
    s.v.emplace_back(t.numel(), 0.0);
  }
  return s;
}

void adam_step(ParameterSet& params, AdamState& state, double lr, const AdamConfig& cfg) {
  const auto& entries = params.entries();
  if (state.m.size() != entries.size() || state.v.size() != entries.size()) {
    throw DimensionError("optimizer state holds " + std::to_string(state.m.size()) +
                         " tensors for " + std::to_string(entries.size()) + " parameters");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t p = 0; p < entries.size(); ++p) {
    const std::string& name = entries[p].first;
    Tensor tensor = entries[p].second;  // handle shares storage
    auto data = tensor.mutable_data();
    auto g = tensor.grad();
    auto& m = state.m[p];
    auto& v = state.v[p];
    if (m.size() != data.size() || v.size() != data.size() || (!g.empty() && g.size() != data.size())) {
      throw DimensionError("optimizer state for '" + name + "' does not match its shape");
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double grad = (g.empty() ? 0.0 : g[i]) + cfg.weight_decay * data[i];
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad * grad;
      data[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
  }
}

double LrSchedule::at(std::uint64_t step) const {
  if (period == 0) return base;
  return base * std::pow(0.5, static_cast<double>(step / period));
}

}  // namespace gcagc
