#include "gcagc/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>

#include "gcagc/error.hpp"
#include "gcagc/netpbm.hpp"
#include "gcagc/rng.hpp"

namespace fs = std::filesystem;

namespace gcagc {

void SyntheticConfig::validate() const {
  if (image_size < 16) throw ConfigError("synthetic image size must be at least 16");
  if (group_size == 0) throw ConfigError("group size must be positive");
  if (!(noise >= 0.0 && noise <= 0.5)) throw ConfigError("noise amplitude must lie in [0, 0.5]");
}

namespace {

using Color = std::array<double, 3>;

double distance(const Color& a, const Color& b) {
  double s = 0.0;
  for (int c = 0; c < 3; ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
  return std::sqrt(s);
}

Color random_color(Rng& rng) { return {rng.uniform(), rng.uniform(), rng.uniform()}; }

// Rejection-samples a colour at least `min_dist` away from every colour in `avoid`.
Color distinct_color(Rng& rng, const std::vector<Color>& avoid, double min_dist) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Color c = random_color(rng);
    bool ok = std::all_of(avoid.begin(), avoid.end(),
                          [&](const Color& a) { return distance(a, c) >= min_dist; });
    if (ok) return c;
  }
  throw ConfigError("could not sample a distinct colour");
}

struct Placement {
  ShapeFamily family;
  double cx, cy, r;  // centre and half-extent in pixels
};

bool inside(const Placement& p, double x, double y) {
  const double dx = x - p.cx, dy = y - p.cy;
  switch (p.family) {
    case ShapeFamily::disc: return dx * dx + dy * dy <= p.r * p.r;
    case ShapeFamily::square: return std::abs(dx) <= p.r && std::abs(dy) <= p.r;
    case ShapeFamily::triangle: {
      // Apex up, base at cy + r, apex at cy - r.
      if (dy < -p.r || dy > p.r) return false;
      return std::abs(dx) <= 0.5 * (dy + p.r);
    }
  }
  return false;
}

Placement place(Rng& rng, ShapeFamily family, double size, double lo, double hi) {
  Placement p;
  p.family = family;
  p.r = rng.uniform(lo, hi) * size;
  p.cx = rng.uniform(p.r, size - p.r);
  p.cy = rng.uniform(p.r, size - p.r);
  return p;
}

void paint(Image& img, const Placement& p, const Color& color, Image* mask) {
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x) {
      if (!inside(p, x + 0.5, y + 0.5)) continue;
      for (int c = 0; c < 3; ++c) img.at(y, x, c) = color[c];
      if (mask) mask->at(y, x) = 1.0;
    }
}

std::string numbered(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%03zu", prefix, i);
  return buf;
}

}  // namespace

ImageGroup generate_synthetic_group(const SyntheticConfig& cfg, std::size_t group_index) {
  cfg.validate();
  Rng rng = Rng::derive(cfg.seed, group_index);
  const auto size = static_cast<double>(cfg.image_size);
  const auto family = static_cast<ShapeFamily>(rng.below(3));
  const Color common = random_color(rng);

  ImageGroup g;
  g.id = numbered("group_", group_index);
  for (std::size_t n = 0; n < cfg.group_size; ++n) {
    Image img(cfg.image_size, cfg.image_size, 3);
    Image mask(cfg.image_size, cfg.image_size, 1);

    // Low-contrast background: a vertical blend of two nearby colours.
    const Color bg = distinct_color(rng, {common}, 0.45);
    Color bg2;
    for (int c = 0; c < 3; ++c) bg2[c] = std::clamp(bg[c] + rng.uniform(-0.15, 0.15), 0.0, 1.0);
    for (std::size_t y = 0; y < cfg.image_size; ++y) {
      const double t = static_cast<double>(y) / (size - 1);
      for (std::size_t x = 0; x < cfg.image_size; ++x)
        for (int c = 0; c < 3; ++c) img.at(y, x, c) = (1 - t) * bg[c] + t * bg2[c];
    }

    const std::size_t distractors = rng.below(cfg.max_distractors + 1);
    std::vector<Color> used{common, bg};
    for (std::size_t k = 0; k < distractors; ++k) {
      const Color c = distinct_color(rng, used, 0.45);
      used.push_back(c);
      paint(img, place(rng, static_cast<ShapeFamily>(rng.below(3)), size, 0.14, 0.26), c, nullptr);
    }
    paint(img, place(rng, family, size, 0.14, 0.26), common, &mask);

    for (auto& v : img.pixels) v = std::clamp(v + cfg.noise * (2.0 * rng.uniform() - 1.0), 0.0, 1.0);
    g.names.push_back(numbered("img_", n));
    g.images.push_back(std::move(img));
    g.masks.push_back(std::move(mask));
  }
  return g;
}

void write_group(const ImageGroup& group, const fs::path& root) {
  group.validate();
  const fs::path dir = root / group.id;
  fs::create_directories(dir / "gt");
  for (std::size_t i = 0; i < group.size(); ++i) {
    write_netpbm(dir / (group.names[i] + ".ppm"), group.images[i]);
    if (group.has_masks()) write_netpbm(dir / "gt" / (group.names[i] + ".pgm"), group.masks[i]);
  }
}

void write_synthetic_dataset(const SyntheticConfig& cfg, const fs::path& root) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec || !fs::is_directory(root)) throw InputError("cannot create directory " + root.string());
  for (std::size_t g = 0; g < cfg.groups; ++g) {
    write_group(generate_synthetic_group(cfg, cfg.first_group + g), root);
  }
}

std::vector<ImageGroup> load_dataset_dir(const fs::path& root, bool require_masks) {
  if (!fs::is_directory(root)) throw InputError("dataset directory " + root.string() + " not found");
  std::vector<fs::path> dirs;
  for (const auto& e : fs::directory_iterator(root)) {
    if (e.is_directory()) dirs.push_back(e.path());
  }
  std::sort(dirs.begin(), dirs.end());
  std::vector<ImageGroup> groups;
  for (const auto& dir : dirs) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().extension() == ".ppm") files.push_back(e.path());
    }
    if (files.empty()) continue;
    std::sort(files.begin(), files.end());
    ImageGroup g;
    g.id = dir.filename().string();
    bool all_masks = true;
    std::vector<Image> masks;
    for (const auto& f : files) {
      g.names.push_back(f.stem().string());
      g.images.push_back(read_netpbm(f));
      const fs::path gt = dir / "gt" / (f.stem().string() + ".pgm");
      if (fs::exists(gt)) {
        masks.push_back(binarize_mask(read_netpbm(gt)));
      } else {
        if (require_masks) throw InputError("missing mask " + gt.string());
        all_masks = false;
      }
    }
    if (all_masks) g.masks = std::move(masks);
    groups.push_back(std::move(g));
  }
  return groups;
}

std::vector<ImageGroup> make_mini_groups(const std::vector<ImageGroup>& groups, std::size_t size) {
  if (size == 0) throw ConfigError("mini-group size must be positive");
  std::vector<ImageGroup> out;
  for (const auto& g : groups) {
    const std::size_t count = g.size();
    if (count == 0) continue;
    const std::size_t parts = (count + size - 1) / size;
    for (std::size_t p = 0; p < parts; ++p) {
      ImageGroup m;
      m.id = parts == 1 ? g.id : g.id + "#" + std::to_string(p);
      for (std::size_t k = 0; k < size; ++k) {
        const std::size_t i = (p * size + k) % count;
        m.names.push_back(g.names[i]);
        m.images.push_back(g.images[i]);
        if (g.has_masks()) m.masks.push_back(g.masks[i]);
      }
      out.push_back(std::move(m));
    }
  }
  return out;
}

ImageGroup resize_group(const ImageGroup& group, std::size_t side) {
  ImageGroup out = group;
  for (auto& im : out.images) im = resize_bilinear(im, side, side);
  for (auto& m : out.masks) {
    m = resize_bilinear(m, side, side);
    for (auto& v : m.pixels) v = v >= 0.5 ? 1.0 : 0.0;
  }
  return out;
}

}  // namespace gcagc
