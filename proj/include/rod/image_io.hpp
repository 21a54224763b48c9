#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace rod {

// 8-bit interleaved image with 1 (gray) or 3 (RGB) channels.
struct Image8 {
  int64_t width = 0;
  int64_t height = 0;
  int64_t channels = 0;
  std::vector<uint8_t> data;

  Image8() = default;
  Image8(int64_t w, int64_t h, int64_t c, uint8_t fill = 0)
      : width(w), height(h), channels(c), data(static_cast<size_t>(w * h * c), fill) {}

  uint8_t& at(int64_t y, int64_t x, int64_t c) {
    return data[static_cast<size_t>((y * width + x) * channels + c)];
  }
  uint8_t at(int64_t y, int64_t x, int64_t c) const {
    return data[static_cast<size_t>((y * width + x) * channels + c)];
  }
  bool operator==(const Image8&) const = default;
};

struct PngInfo {
  int64_t width = 0;
  int64_t height = 0;
  bool color = false;
};

// Alpha is dropped, palettes are expanded, 16-bit samples are reduced to 8.
// Gray sources give 1 channel, color sources 3. Throws IoError on failure.
Image8 read_png(const std::filesystem::path& path);
PngInfo read_png_info(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const Image8& image);

}  // namespace rod
