#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "gcagc/image.hpp"

namespace gcagc {

// Binary netpbm: P6 (RGB) and P5 (gray), maxval 255. Samples are stored as
// value / 255 and written back as round(255 * clamp(v, 0, 1)).

/// Parses P5 or P6 bytes. `source` names the data in error messages, which
/// also give the byte offset of the problem.
Image decode_netpbm(std::span<const std::uint8_t> bytes, const std::string& source = "<memory>");
/// P6 for 3-channel images, P5 for single-channel ones.
std::vector<std::uint8_t> encode_netpbm(const Image& image);

Image read_netpbm(const std::filesystem::path& path);
void write_netpbm(const std::filesystem::path& path, const Image& image);

/// Thresholds a gray image at > 127/255 into a {0, 1} mask.
Image binarize_mask(const Image& gray);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace gcagc
