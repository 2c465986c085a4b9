#include "gcagc/decoder.hpp"

#include <algorithm>

#include "gcagc/error.hpp"
#include "gcagc/ops.hpp"

namespace gcagc {

std::size_t halved_channels(std::size_t c) { return std::max<std::size_t>(4, c / 2); }

std::size_t upsample_module_count(std::size_t graph_size, std::size_t output_size) {
  std::size_t count = 0;
  std::size_t s = graph_size;
  while (s != 0 && s < output_size) {
    s *= 2;
    ++count;
  }
  if (s == 0 || s != output_size) {
    throw ConfigError("cannot reach resolution " + std::to_string(output_size) + " from " +
                      std::to_string(graph_size) + " by x2 steps");
  }
  return count;
}

DecoderParams DecoderParams::create(ParameterSet& set, Rng& rng, std::size_t in_channels,
                                    std::size_t graph_size, std::size_t output_size) {
  const std::size_t count = upsample_module_count(graph_size, output_size);
  DecoderParams p;
  std::size_t c = in_channels;
  for (std::size_t m = 0; m < count; ++m) {
    const std::string base = "decoder/up" + std::to_string(m + 1);
    const std::size_t next = halved_channels(c);
    UpModule mod;
    mod.conv = make_conv(set, rng, base + "/conv", next, c, 3);
    mod.deconv = make_deconv(set, rng, base + "/deconv", next, next, 4);
    p.modules.push_back(mod);
    c = next;
  }
  p.head = make_conv(set, rng, "decoder/head", 1, c, 1);
  return p;
}

Tensor decode(const Tensor& fused, const DecoderParams& params) {
  if (fused.rank() != 4) {
    throw DimensionError("decode expects N x h x w x C features, got " + to_string(fused.shape()));
  }
  Tensor x = permute(fused, {0, 3, 1, 2});
  for (const auto& m : params.modules) {
    x = relu(conv2d(x, m.conv.weight, m.conv.bias, 1, 1));
    x = conv_transpose2d(x, m.deconv.weight, m.deconv.bias, 2, 1);
  }
  return sigmoid(conv2d(x, params.head.weight, params.head.bias, 1, 0));
}

LossWeighting parse_loss_weighting(const std::string& name) {
  if (name == "paper") return LossWeighting::paper;
  if (name == "balanced") return LossWeighting::balanced;
  throw ConfigError("unknown loss weighting '" + name + "' (expected paper or balanced)");
}

std::string to_string(LossWeighting mode) {
  return mode == LossWeighting::paper ? "paper" : "balanced";
}

Tensor classification_loss(const Tensor& maps, const Tensor& masks, LossWeighting mode) {
  if (maps.shape() != masks.shape() || maps.rank() != 4) {
    throw DimensionError("classification_loss: maps " + to_string(maps.shape()) + " vs masks " +
                         to_string(masks.shape()));
  }
  const std::size_t n = maps.dim(0);
  const std::size_t per_image = maps.numel() / n;
  const auto gt = masks.data();
  std::vector<double> pos(gt.size()), neg(gt.size());
  for (std::size_t img = 0; img < n; ++img) {
    double count = 0.0;
    for (std::size_t i = 0; i < per_image; ++i) {
      const double g = gt[img * per_image + i];
      if (g != 0.0 && g != 1.0) {
        throw InputError("classification_loss: mask of image " + std::to_string(img) +
                         " is not binary");
      }
      count += g;
    }
    const double rho = count / static_cast<double>(per_image);
    const double w_pos = mode == LossWeighting::paper ? rho : 1.0 - rho;
    const double w_neg = mode == LossWeighting::paper ? 1.0 - rho : rho;
    for (std::size_t i = 0; i < per_image; ++i) {
      const std::size_t k = img * per_image + i;
      pos[k] = w_pos * gt[k];
      neg[k] = w_neg * (1.0 - gt[k]);
    }
  }
  const Shape& s = maps.shape();
  Tensor log_m = log_clamped(maps);
  Tensor log_1m = log_clamped(add_scalar(scale(maps, -1.0), 1.0));
  Tensor sum = add(mul(Tensor::from_data(s, std::move(pos)), log_m),
                   mul(Tensor::from_data(s, std::move(neg)), log_1m));
  return scale(reduce_sum(sum), -1.0 / static_cast<double>(maps.numel()));
}

Tensor total_loss(const Tensor& loss_cls, const Tensor& loss_gc, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be nonnegative");
  if (!loss_gc.defined() || lambda == 0.0) return loss_cls;
  return add(loss_cls, scale(loss_gc, lambda));
}

}  // namespace gcagc
