#include "gcagc/encoder.hpp"

#include "gcagc/error.hpp"
#include "gcagc/ops.hpp"

namespace gcagc {

void EncoderConfig::validate() const {
  if (graph_stride != 4 && graph_stride != 8) {
    throw ConfigError("graph_stride must be 4 or 8, got " + std::to_string(graph_stride));
  }
  if (input_size == 0 || input_size % (4 * graph_stride) != 0 || input_size % 16 != 0) {
    throw ConfigError("input_size " + std::to_string(input_size) +
                      " must be a positive multiple of 16 and of 4*graph_stride");
  }
  for (auto c : stage_channels) {
    if (c == 0) throw ConfigError("stage channel widths must be positive");
  }
  if (fpn_channels < 2) throw ConfigError("fpn_channels must be at least 2");
}

EncoderParams EncoderParams::create(ParameterSet& set, Rng& rng, const EncoderConfig& cfg) {
  cfg.validate();
  EncoderParams p;
  const auto& ch = cfg.stage_channels;
  p.stem = make_conv(set, rng, "encoder/stem", ch[0], 3, 3);
  std::size_t in = ch[0];
  for (std::size_t s = 0; s < 3; ++s) {
    const std::string base = "encoder/stage" + std::to_string(s + 1);
    p.stages[s][0] = make_conv(set, rng, base + "/conv1", ch[s], in, 3);
    p.stages[s][1] = make_conv(set, rng, base + "/conv2", ch[s], ch[s], 3);
    in = ch[s];
  }
  for (std::size_t s = 0; s < 3; ++s) {
    p.lateral[s] = make_conv(set, rng, "fpn/lateral" + std::to_string(s + 3), cfg.fpn_channels,
                             ch[s], 1);
  }
  return p;
}

namespace {

Tensor conv_relu(const Tensor& x, const ConvParams& p) {
  return relu(conv2d(x, p.weight, p.bias, 1, 1));
}

}  // namespace

FeaturePyramid encode_images(const Tensor& images, const EncoderConfig& cfg,
                             const EncoderParams& params) {
  cfg.validate();
  if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != cfg.input_size ||
      images.dim(3) != cfg.input_size) {
    throw InputError("encoder expects N x 3 x " + std::to_string(cfg.input_size) + " x " +
                     std::to_string(cfg.input_size) + " images, got " + to_string(images.shape()));
  }
  Tensor x = maxpool2d(conv_relu(images, params.stem));
  std::array<Tensor, 3> out;
  for (std::size_t s = 0; s < 3; ++s) {
    x = conv_relu(x, params.stages[s][0]);
    x = conv_relu(x, params.stages[s][1]);
    x = maxpool2d(x);
    out[s] = x;
  }
  return {out[0], out[1], out[2]};
}

FeaturePyramid encode_group(const ImageGroup& group, const EncoderConfig& cfg,
                            const EncoderParams& params) {
  group.validate();
  const auto& im = group.images.front();
  if (im.width != cfg.input_size || im.height != cfg.input_size) {
    throw InputError("group '" + group.id + "' images are " + std::to_string(im.width) + "x" +
                     std::to_string(im.height) + ", encoder expects " +
                     std::to_string(cfg.input_size) + "x" + std::to_string(cfg.input_size));
  }
  return encode_images(images_to_tensor(group), cfg, params);
}

LateralMaps fpn_fuse(const FeaturePyramid& f, const EncoderConfig& cfg, const EncoderParams& params) {
  (void)cfg;
  auto lat = [&](const Tensor& c, std::size_t s) {
    return conv2d(c, params.lateral[s].weight, params.lateral[s].bias, 1, 0);
  };
  LateralMaps m;
  m.p5 = lat(f.c5, 2);
  m.p4 = add(lat(f.c4, 1), upsample_nearest2x(m.p5));
  m.p3 = add(lat(f.c3, 0), upsample_nearest2x(m.p4));
  return m;
}

Tensor flatten_nodes(const Tensor& nchw) {
  if (nchw.rank() != 4) throw DimensionError("flatten_nodes expects N x C x H x W, got " + to_string(nchw.shape()));
  const std::size_t n = nchw.dim(0), c = nchw.dim(1), h = nchw.dim(2), w = nchw.dim(3);
  return reshape(permute(nchw, {0, 2, 3, 1}), {n * h * w, c});
}

Tensor unflatten_nodes(const Tensor& rows, std::size_t images, std::size_t height,
                       std::size_t width) {
  if (rows.rank() != 2 || rows.dim(0) != images * height * width) {
    throw DimensionError("unflatten_nodes: " + to_string(rows.shape()) + " does not hold " +
                         std::to_string(images * height * width) + " nodes");
  }
  return permute(reshape(rows, {images, height, width, rows.dim(1)}), {0, 3, 1, 2});
}

NodeFeatureSet to_node_features(const LateralMaps& maps, const EncoderConfig& cfg) {
  cfg.validate();
  const std::size_t res = cfg.graph_resolution();
  auto align = [res](Tensor t) {
    while (t.dim(2) < res) t = upsample_nearest2x(t);
    while (t.dim(2) > res) t = maxpool2d(t);
    return t;
  };
  NodeFeatureSet set;
  set.images = maps.p3.dim(0);
  set.height = set.width = res;
  set.x = {flatten_nodes(align(maps.p3)), flatten_nodes(align(maps.p4)),
           flatten_nodes(align(maps.p5))};
  return set;
}

}  // namespace gcagc
