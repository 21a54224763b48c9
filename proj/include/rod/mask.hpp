#pragma once

#include <cstdint>
#include <utility>
#include <vector>

namespace rod {

// Binary per-pixel label map, row-major. 1 = freespace.
struct Mask {
  int64_t height = 0;
  int64_t width = 0;
  std::vector<uint8_t> data;

  Mask() = default;
  Mask(int64_t h, int64_t w, uint8_t fill = 0)
      : height(h), width(w), data(static_cast<size_t>(h * w), fill) {}
  Mask(int64_t h, int64_t w, std::vector<uint8_t> values)
      : height(h), width(w), data(std::move(values)) {}

  int64_t size() const noexcept { return height * width; }
  uint8_t& at(int64_t y, int64_t x) { return data[static_cast<size_t>(y * width + x)]; }
  uint8_t at(int64_t y, int64_t x) const { return data[static_cast<size_t>(y * width + x)]; }

  bool operator==(const Mask&) const = default;
};

}  // namespace rod
