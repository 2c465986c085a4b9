#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "gcagc/tensor.hpp"

namespace gcagc {

/// Interleaved row-major image with float samples in [0, 1].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::size_t c, double fill = 0.0)
      : width(w), height(h), channels(c), pixels(w * h * c, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c = 0) {
    return pixels[(y * width + x) * channels + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c = 0) const {
    return pixels[(y * width + x) * channels + c];
  }
  bool operator==(const Image&) const = default;
};

/// N images of a common size plus optional binary masks; the unit of both
/// training and inference.
struct ImageGroup {
  std::string id;
  std::vector<std::string> names;  // per-image stem, e.g. "img_000"
  std::vector<Image> images;       // RGB
  std::vector<Image> masks;        // single channel, {0, 1}; empty if unknown

  std::size_t size() const { return images.size(); }
  bool has_masks() const { return !masks.empty(); }
  /// Throws InputError unless all images share one size and masks are binary.
  void validate() const;
};

/// N x 3 x H x W tensor of the group's images.
Tensor images_to_tensor(const ImageGroup& group);
/// N x 1 x H x W tensor of the group's masks.
Tensor masks_to_tensor(const ImageGroup& group);

/// Bilinear resampling (pixel-centre aligned).
Image resize_bilinear(const Image& src, std::size_t width, std::size_t height);

}  // namespace gcagc
