#pragma once

#include <array>
#include <cstddef>

#include "gcagc/image.hpp"
#include "gcagc/params.hpp"
#include "gcagc/tensor.hpp"

namespace gcagc {

struct EncoderConfig {
  std::size_t input_size = 64;                       // square input side, pixels
  std::array<std::size_t, 3> stage_channels{16, 32, 64};
  std::size_t fpn_channels = 32;                     // d^k for every scale
  std::size_t graph_stride = 4;                      // 4 or 8

  /// Throws ConfigError on invalid combinations.
  void validate() const;
  std::size_t graph_resolution() const { return input_size / graph_stride; }
};

/// Stem (conv + relu + pool) followed by three stages of two 3x3 conv+relu
/// and a 2x2 max pool, plus one lateral 1x1 conv per stage for the pyramid.
struct EncoderParams {
  ConvParams stem;
  std::array<std::array<ConvParams, 2>, 3> stages;
  std::array<ConvParams, 3> lateral;

  static EncoderParams create(ParameterSet& set, Rng& rng, const EncoderConfig& cfg);
};

/// Backbone outputs, each N x C x H x W: c3 at stride 4, c4 at 8, c5 at 16.
struct FeaturePyramid {
  Tensor c3, c4, c5;
};

/// Top-down fused lateral maps, fpn_channels wide, same strides as the inputs.
struct LateralMaps {
  Tensor p3, p4, p5;
};

/// Per-scale node feature matrices X^k, each (N*h*w) x d^k. Row
/// n*h*w + i*w + j holds pixel (row i, col j) of image n.
struct NodeFeatureSet {
  std::array<Tensor, 3> x;
  std::size_t images = 0;
  std::size_t height = 0;
  std::size_t width = 0;

  std::size_t nodes() const { return images * height * width; }
};

FeaturePyramid encode_images(const Tensor& images, const EncoderConfig& cfg,
                             const EncoderParams& params);
/// Validates that every image matches cfg.input_size, then encodes.
FeaturePyramid encode_group(const ImageGroup& group, const EncoderConfig& cfg,
                            const EncoderParams& params);

/// P5 = lat(C5); P4 = lat(C4) + up2(P5); P3 = lat(C3) + up2(P4).
LateralMaps fpn_fuse(const FeaturePyramid& features, const EncoderConfig& cfg,
                     const EncoderParams& params);

/// Aligns the three lateral maps to the graph resolution (coarser maps are
/// nearest-upsampled; with graph stride 8 the stride-4 map is max-pooled)
/// and flattens each into node rows.
NodeFeatureSet to_node_features(const LateralMaps& maps, const EncoderConfig& cfg);

/// N x C x H x W -> (N*H*W) x C under the node index convention.
Tensor flatten_nodes(const Tensor& nchw);
/// Inverse of flatten_nodes.
Tensor unflatten_nodes(const Tensor& rows, std::size_t images, std::size_t height,
                       std::size_t width);

}  // namespace gcagc
