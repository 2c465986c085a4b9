#include "gcagc/params.hpp"

#include <cmath>

#include "gcagc/error.hpp"

namespace gcagc {

Tensor ParameterSet::add(const std::string& name, Tensor t) {
  if (contains(name)) throw ConfigError("duplicate parameter name '" + name + "'");
  t.set_requires_grad(true);
  index_.emplace(name, entries_.size());
  entries_.emplace_back(name, t);
  return t;
}

const Tensor& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return entries_[it->second].second;
}

Tensor& ParameterSet::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter '" + name + "'");
  return entries_[it->second].second;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

Tensor scaled_normal(Rng& rng, Shape shape, std::size_t fan_in, double gain) {
  const double sd = gain / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = sd * rng.normal();
  return Tensor::from_data(std::move(shape), std::move(v));
}

Tensor he_normal(Rng& rng, Shape shape, std::size_t fan_in) {
  return scaled_normal(rng, std::move(shape), fan_in, std::sqrt(2.0));
}

ConvParams make_conv(ParameterSet& set, Rng& rng, const std::string& name, std::size_t out,
                     std::size_t in, std::size_t k) {
  ConvParams p;
  p.weight = set.add(name + "/w", he_normal(rng, {out, in, k, k}, in * k * k));
  p.bias = set.add(name + "/b", Tensor::zeros({out}));
  return p;
}

ConvParams make_deconv(ParameterSet& set, Rng& rng, const std::string& name, std::size_t in,
                       std::size_t out, std::size_t k) {
  // Each output pixel of a stride-2, kernel-4 deconv receives in*(k/2)^2 taps.
  ConvParams p;
  const std::size_t fan_in = in * (k / 2) * (k / 2);
  p.weight = set.add(name + "/w", he_normal(rng, {in, out, k, k}, fan_in == 0 ? 1 : fan_in));
  p.bias = set.add(name + "/b", Tensor::zeros({out}));
  return p;
}

}  // namespace gcagc
