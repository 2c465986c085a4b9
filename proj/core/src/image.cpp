#include "gcagc/image.hpp"

#include <algorithm>
#include <cmath>

#include "gcagc/error.hpp"

namespace gcagc {

void ImageGroup::validate() const {
  if (images.empty()) throw InputError("group '" + id + "' has no images");
  const auto& first = images.front();
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& im = images[i];
    if (im.width != first.width || im.height != first.height || im.channels != 3) {
      throw InputError("group '" + id + "': image " + std::to_string(i) + " is " +
                       std::to_string(im.width) + "x" + std::to_string(im.height) + "x" +
                       std::to_string(im.channels) + ", expected " + std::to_string(first.width) +
                       "x" + std::to_string(first.height) + "x3");
    }
  }
  if (masks.empty()) return;
  if (masks.size() != images.size()) {
    throw InputError("group '" + id + "': " + std::to_string(masks.size()) + " masks for " +
                     std::to_string(images.size()) + " images");
  }
  for (std::size_t i = 0; i < masks.size(); ++i) {
    const auto& m = masks[i];
    if (m.width != first.width || m.height != first.height || m.channels != 1) {
      throw InputError("group '" + id + "': mask " + std::to_string(i) + " has the wrong size");
    }
    for (double v : m.pixels) {
      if (v != 0.0 && v != 1.0) {
        throw InputError("group '" + id + "': mask " + std::to_string(i) + " is not binary");
      }
    }
  }
}

Tensor images_to_tensor(const ImageGroup& group) {
  group.validate();
  const std::size_t n = group.size(), h = group.images[0].height, w = group.images[0].width;
  std::vector<double> data(n * 3 * h * w);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          data[((b * 3 + c) * h + y) * w + x] = group.images[b].at(y, x, c);
  return Tensor::from_data({n, 3, h, w}, std::move(data));
}

Tensor masks_to_tensor(const ImageGroup& group) {
  group.validate();
  if (!group.has_masks()) throw InputError("group '" + group.id + "' has no masks");
  const std::size_t n = group.size(), h = group.images[0].height, w = group.images[0].width;
  std::vector<double> data;
  data.reserve(n * h * w);
  for (const auto& m : group.masks) data.insert(data.end(), m.pixels.begin(), m.pixels.end());
  return Tensor::from_data({n, 1, h, w}, std::move(data));
}

Image resize_bilinear(const Image& src, std::size_t width, std::size_t height) {
  if (src.width == width && src.height == height) return src;
  Image out(width, height, src.channels);
  const double sx = static_cast<double>(src.width) / static_cast<double>(width);
  const double sy = static_cast<double>(src.height) / static_cast<double>(height);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(src.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, src.height - 1);
    const double ty = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(src.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, src.width - 1);
      const double tx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < src.channels; ++c) {
        const double top = (1 - tx) * src.at(y0, x0, c) + tx * src.at(y0, x1, c);
        const double bot = (1 - tx) * src.at(y1, x0, c) + tx * src.at(y1, x1, c);
        out.at(y, x, c) = (1 - ty) * top + ty * bot;
      }
    }
  }
  return out;
}

}  // namespace gcagc
