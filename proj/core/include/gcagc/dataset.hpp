#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gcagc/image.hpp"

namespace gcagc {

enum class ShapeFamily { disc, square, triangle };

struct SyntheticConfig {
  std::uint64_t seed = 7;
  std::size_t image_size = 64;
  std::size_t groups = 100;
  std::size_t first_group = 0;      // index of the first group written
  std::size_t group_size = 5;
  std::size_t max_distractors = 2;  // per image, uniform in [0, max]
  double noise = 0.05;              // background noise amplitude

  void validate() const;
};

/// One synthetic group. All images share a common object (shape family and
/// colour fixed per group, position and scale per image); distractors use
/// other colours and never enter the mask. Deterministic in (seed, index).
ImageGroup generate_synthetic_group(const SyntheticConfig& cfg, std::size_t group_index);

/// Writes groups first_group .. first_group + groups - 1 as
/// root/group_XXX/img_XXX.ppm + gt/img_XXX.pgm.
void write_synthetic_dataset(const SyntheticConfig& cfg, const std::filesystem::path& root);
/// Writes one group in the dataset layout under root/<group.id>.
void write_group(const ImageGroup& group, const std::filesystem::path& root);

/// Reads every group directory under root in lexicographic order. Masks
/// under gt/ are thresholded at > 127. With require_masks, a missing mask is
/// an InputError.
std::vector<ImageGroup> load_dataset_dir(const std::filesystem::path& root,
                                         bool require_masks = false);

/// Splits each group into consecutive mini-groups of exactly `size` images;
/// the last one is padded by cycling from the group's first image. Image
/// names are kept, so padded duplicates share a name with their source.
std::vector<ImageGroup> make_mini_groups(const std::vector<ImageGroup>& groups, std::size_t size);

/// Resizes every image (bilinear) and mask (bilinear, then >= 0.5) to side x side.
ImageGroup resize_group(const ImageGroup& group, std::size_t side);

}  // namespace gcagc
