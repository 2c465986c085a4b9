#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gcagc/model.hpp"
#include "gcagc/optim.hpp"
#include "gcagc/tensor.hpp"

namespace gcagc {

// Layout (all integers little-endian):
//   "GCAGCKPT" | u32 version | u32 count |
//   count x { u16 name_len | name | u8 rank | rank x u32 dim | f64 payload }
// Names under "opt/" hold optimizer state, "meta/" the model configuration.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;  // empty for scalars
  std::vector<double> data;

  bool operator==(const NamedTensor&) const = default;
};

using TensorTable = std::vector<NamedTensor>;

std::vector<std::uint8_t> encode_checkpoint(const TensorTable& table);
/// Throws FormatError (bad magic, truncation, trailing bytes) or
/// UnsupportedVersionError. Nothing is returned unless the whole file parses.
TensorTable decode_checkpoint(std::span<const std::uint8_t> bytes,
                              const std::string& source = "<memory>");

/// Writes through a temporary file and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const TensorTable& table);
TensorTable load_checkpoint(const std::filesystem::path& path);

/// Parameters, configuration and (optionally) optimizer state.
TensorTable model_to_table(const Model& model, const AdamState* state = nullptr);

struct LoadedModel {
  Model model;
  AdamState state;
  bool has_state = false;
};

/// Rebuilds the architecture from the meta entries and copies every
/// parameter. Missing, extra or mis-shaped parameters are FormatErrors.
LoadedModel model_from_table(const TensorTable& table);

}  // namespace gcagc
