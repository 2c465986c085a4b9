#include "gcagc/netpbm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "gcagc/error.hpp"

namespace gcagc {

namespace {

class HeaderReader {
 public:
  HeaderReader(std::span<const std::uint8_t> bytes, const std::string& source)
      : bytes_(bytes), source_(source) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(source_ + ": byte " + std::to_string(pos_) + ": " + what);
  }

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const auto c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') {
        ++pos_;
      } else {
        break;
      }
    }
  }

  std::size_t number(const char* what) {
    skip_space_and_comments();
    if (pos_ >= bytes_.size()) fail(std::string("unexpected end of header reading ") + what);
    if (bytes_[pos_] < '0' || bytes_[pos_] > '9') fail(std::string("expected ") + what);
    std::size_t v = 0;
    while (pos_ < bytes_.size() && bytes_[pos_] >= '0' && bytes_[pos_] <= '9') {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1u << 24) fail(std::string(what) + " too large");
      ++pos_;
    }
    return v;
  }

  std::size_t pos_ = 0;
  std::span<const std::uint8_t> bytes_;
  std::string source_;
};

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
}

}  // namespace

Image decode_netpbm(std::span<const std::uint8_t> bytes, const std::string& source) {
  HeaderReader r(bytes, source);
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    r.fail("not a binary PGM/PPM file (expected magic P5 or P6)");
  }
  const std::size_t channels = bytes[1] == '6' ? 3 : 1;
  r.pos_ = 2;
  const std::size_t width = r.number("width");
  const std::size_t height = r.number("height");
  const std::size_t maxval = r.number("maxval");
  if (width == 0 || height == 0) r.fail("zero image extent");
  if (maxval != 255) r.fail("unsupported maxval " + std::to_string(maxval) + " (only 255)");
  if (r.pos_ >= bytes.size()) r.fail("missing whitespace after maxval");
  const auto sep = bytes[r.pos_];
  if (sep != ' ' && sep != '\t' && sep != '\n' && sep != '\r') r.fail("missing whitespace after maxval");
  ++r.pos_;
  const std::size_t need = width * height * channels;
  if (bytes.size() - r.pos_ < need) {
    r.fail("pixel data truncated: need " + std::to_string(need) + " bytes, have " +
           std::to_string(bytes.size() - r.pos_));
  }
  Image img(width, height, channels);
  for (std::size_t i = 0; i < need; ++i) img.pixels[i] = bytes[r.pos_ + i] / 255.0;
  return img;
}

std::vector<std::uint8_t> encode_netpbm(const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw InputError("netpbm images need 1 or 3 channels, got " + std::to_string(image.channels));
  }
  const std::string header = std::string(image.channels == 3 ? "P6" : "P5") + "\n" +
                             std::to_string(image.width) + " " + std::to_string(image.height) +
                             "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + image.pixels.size());
  for (double v : image.pixels) out.push_back(quantize(v));
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("write failed for " + path.string());
}

Image read_netpbm(const std::filesystem::path& path) {
  return decode_netpbm(read_file_bytes(path), path.string());
}

void write_netpbm(const std::filesystem::path& path, const Image& image) {
  write_file_bytes(path, encode_netpbm(image));
}

Image binarize_mask(const Image& gray) {
  if (gray.channels != 1) throw InputError("mask must be single-channel");
  Image m = gray;
  for (auto& v : m.pixels) v = std::lround(v * 255.0) > 127 ? 1.0 : 0.0;
  return m;
}

}  // namespace gcagc
