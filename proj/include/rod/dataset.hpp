#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "rod/image_io.hpp"
#include "rod/mask.hpp"
#include "rod/tensor.hpp"

namespace rod::data {

// Where images and masks live under a split directory and how their file
// names pair up. Loaded from a key-value file with the same key names.
struct DatasetLayout {
  std::string image_dir = "images";
  std::string image_glob = "*.png";
  std::string mask_dir = "masks";
  std::string mask_glob = "*.png";
  std::string stem_strip_suffix;  // removed from stems before pairing

  static DatasetLayout orfd();
  static DatasetLayout load(const std::filesystem::path& path);
};

struct SamplePaths {
  std::string stem;
  std::filesystem::path image;
  std::filesystem::path mask;
  int64_t width = 0;   // source image resolution
  int64_t height = 0;
};

struct DatasetIndex {
  std::string split;
  std::vector<SamplePaths> samples;
  std::vector<std::string> unmatched;  // "image:<stem>" / "mask:<stem>" entries skipped in lenient mode

  size_t size() const noexcept { return samples.size(); }
};

// Pairs images with masks by stem, sorted lexicographically. Unmatched files
// raise DataError in strict mode and are skipped (and listed) otherwise.
DatasetIndex index_dataset(const std::filesystem::path& root, const DatasetLayout& layout,
                           const std::string& split = "test", bool strict = true);

struct PreprocessConfig {
  int64_t input_size = 1024;
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> stddev{0.5, 0.5, 0.5};
  double mask_threshold = 128.0;
};

// RGB uint8 image -> (1, 3, S, S): bilinear resize, scale to [0, 1], then
// (x - mean) / std per channel. Non-RGB input raises DataError.
template <typename T>
Tensor<T> preprocess_image(const Image8& image, const PreprocessConfig& cfg);

// Luminance (0.299 R + 0.587 G + 0.114 B for RGB) >= threshold -> 1.
Mask binarize_mask(const Image8& mask, double threshold);

template <typename T>
std::pair<Tensor<T>, Mask> load_and_preprocess(const std::filesystem::path& image_path,
                                               const std::filesystem::path& mask_path,
                                               const PreprocessConfig& cfg);

enum class ExportMode { kMask, kOverlay };

struct OverlayStyle {
  double alpha = 0.5;
  std::array<uint8_t, 3> color{0, 255, 0};
};

// Mask mode: 8-bit gray 0/255. Overlay mode: freespace pixels blended with
// the tint, round((1 - alpha) * src + alpha * tint); others copied.
Image8 render_prediction(const Mask& mask, const Image8& image, ExportMode mode,
                         const OverlayStyle& style = {});
void export_prediction(const Mask& mask, const Image8& image, const std::filesystem::path& out_path,
                       ExportMode mode, const OverlayStyle& style = {});

Image8 mask_to_image(const Mask& mask);

}  // namespace rod::data
