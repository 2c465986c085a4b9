#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gcagc/params.hpp"
#include "gcagc/tensor.hpp"

namespace gcagc {

/// One x2 up-sampling module: 3x3 conv (channel halving) + relu, then a
/// kernel-4 stride-2 transposed conv.
struct UpModule {
  ConvParams conv;
  ConvParams deconv;
};

struct DecoderParams {
  std::vector<UpModule> modules;
  ConvParams head;  // 1x1 conv to a single channel

  /// log2(output_size / graph_size) modules starting from `in_channels`.
  static DecoderParams create(ParameterSet& set, Rng& rng, std::size_t in_channels,
                              std::size_t graph_size, std::size_t output_size);
};

/// Channel width after one module: floor(c / 2), at least 4.
std::size_t halved_channels(std::size_t c);
/// Number of x2 modules from graph_size to output_size. ConfigError if the
/// ratio is not a power of two.
std::size_t upsample_module_count(std::size_t graph_size, std::size_t output_size);

/// fused: N x h x w x C (node layout) -> N x 1 x H x W maps in (0, 1).
Tensor decode(const Tensor& fused, const DecoderParams& params);

enum class LossWeighting {
  paper,     // w_pos = rho, w_neg = 1 - rho
  balanced,  // w_pos = 1 - rho, w_neg = rho
};

LossWeighting parse_loss_weighting(const std::string& name);
std::string to_string(LossWeighting mode);

/// Weighted binary cross-entropy averaged over all N*P pixels, with rho the
/// positive ratio of each image's mask. maps and masks are N x 1 x H x W;
/// masks must be binary (InputError otherwise).
Tensor classification_loss(const Tensor& maps, const Tensor& masks,
                           LossWeighting mode = LossWeighting::balanced);

/// L_cls + lambda * L_gc. An undefined loss_gc counts as zero.
Tensor total_loss(const Tensor& loss_cls, const Tensor& loss_gc, double lambda);

}  // namespace gcagc
