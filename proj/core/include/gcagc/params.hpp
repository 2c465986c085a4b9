#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gcagc/rng.hpp"
#include "gcagc/tensor.hpp"

namespace gcagc {

/// Named trainable leaves in registration order.
class ParameterSet {
 public:
  /// Registers `t` as a trainable leaf. Names must be unique.
  Tensor add(const std::string& name, Tensor t);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// He-style initialization: N(0, 2 / fan_in).
Tensor he_normal(Rng& rng, Shape shape, std::size_t fan_in);
/// N(0, gain^2 / fan_in).
Tensor scaled_normal(Rng& rng, Shape shape, std::size_t fan_in, double gain);

/// A convolution kernel with its per-output-channel bias.
struct ConvParams {
  Tensor weight;
  Tensor bias;
};

/// He-initialized conv2d kernel F x C x k x k with zero bias, registered
/// under `<name>/w` and `<name>/b`.
ConvParams make_conv(ParameterSet& set, Rng& rng, const std::string& name, std::size_t out,
                     std::size_t in, std::size_t k);
/// Transposed-conv kernel Ci x Co x k x k with zero bias.
ConvParams make_deconv(ParameterSet& set, Rng& rng, const std::string& name, std::size_t in,
                       std::size_t out, std::size_t k);

}  // namespace gcagc
