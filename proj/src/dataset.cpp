#include "rod/dataset.hpp"

#include <fnmatch.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "rod/error.hpp"
#include "rod/kernels.hpp"
#include "rod/kv_config.hpp"
#include "rod/log.hpp"

namespace fs = std::filesystem;

namespace rod::data {

namespace {

std::string strip_stem(const fs::path& file, const std::string& suffix) {
  std::string stem = file.stem().string();
  if (!suffix.empty() && stem.size() > suffix.size() &&
      stem.compare(stem.size() - suffix.size(), suffix.size(), suffix) == 0) {
    stem.resize(stem.size() - suffix.size());
  }
  return stem;
}

std::map<std::string, fs::path> scan(const fs::path& dir, const std::string& glob,
                                     const std::string& suffix, const char* kind) {
  if (!fs::is_directory(dir)) {
    throw IoError(std::string(kind) + " directory not found: " + dir.string());
  }
  std::map<std::string, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (fnmatch(glob.c_str(), name.c_str(), 0) != 0) continue;
    const std::string stem = strip_stem(entry.path(), suffix);
    auto [it, inserted] = out.emplace(stem, entry.path());
    if (!inserted) {
      throw DataError(std::string("duplicate ") + kind + " stem '" + stem + "': " +
                      it->second.string() + " and " + entry.path().string());
    }
  }
  return out;
}

}  // namespace

DatasetLayout DatasetLayout::orfd() {
  DatasetLayout l;
  l.image_dir = "image_data";
  l.image_glob = "*.png";
  l.mask_dir = "gt_image";
  l.mask_glob = "*_fillcolor.png";
  l.stem_strip_suffix = "_fillcolor";
  return l;
}

DatasetLayout DatasetLayout::load(const fs::path& path) {
  const KeyValueConfig kv = KeyValueConfig::load(path);
  DatasetLayout l;
  l.image_dir = kv.get_or("image_dir", l.image_dir);
  l.image_glob = kv.get_or("image_glob", l.image_glob);
  l.mask_dir = kv.get_or("mask_dir", l.mask_dir);
  l.mask_glob = kv.get_or("mask_glob", l.mask_glob);
  l.stem_strip_suffix = kv.get_or("stem_strip_suffix", l.stem_strip_suffix);
  return l;
}

DatasetIndex index_dataset(const fs::path& root, const DatasetLayout& layout,
                           const std::string& split, bool strict) {
  if (!fs::is_directory(root)) throw IoError("dataset root not found: " + root.string());
  const auto images = scan(root / layout.image_dir, layout.image_glob, layout.stem_strip_suffix, "image");
  const auto masks = scan(root / layout.mask_dir, layout.mask_glob, layout.stem_strip_suffix, "mask");

  DatasetIndex index;
  index.split = split;
  for (const auto& [stem, path] : images) {
    auto m = masks.find(stem);
    if (m == masks.end()) {
      index.unmatched.push_back("image:" + stem);
      continue;
    }
    SamplePaths s{stem, path, m->second, 0, 0};
    index.samples.push_back(std::move(s));
  }
  for (const auto& [stem, path] : masks) {
    if (!images.count(stem)) index.unmatched.push_back("mask:" + stem);
  }
  if (!index.unmatched.empty()) {
    std::string list;
    for (const auto& u : index.unmatched) list += (list.empty() ? "" : ", ") + u;
    if (strict) throw DataError("unmatched dataset files under " + root.string() + ": " + list);
    log::warn("skipping unmatched dataset files: " + list);
  }
  for (auto& s : index.samples) {
    const PngInfo info = read_png_info(s.image);
    s.width = info.width;
    s.height = info.height;
  }
  return index;
}

template <typename T>
Tensor<T> preprocess_image(const Image8& image, const PreprocessConfig& cfg) {
  if (image.channels != 3) {
    throw DataError("preprocess_image: expected 3-channel RGB image, got " +
                    std::to_string(image.channels) + " channels");
  }
  const int64_t H = image.height, W = image.width, P = H * W;
  Tensor<T> planes({1, 3, H, W});
  for (int64_t c = 0; c < 3; ++c) {
    T* dst = planes.data() + c * P;
    for (int64_t p = 0; p < P; ++p) dst[p] = static_cast<T>(image.data[static_cast<size_t>(p * 3 + c)]);
  }
  Tensor<T> resized = kernels::resize_bilinear(planes, cfg.input_size, cfg.input_size);
  const int64_t Q = cfg.input_size * cfg.input_size;
  for (int64_t c = 0; c < 3; ++c) {
    const T scale = static_cast<T>(1.0 / (255.0 * cfg.stddev[static_cast<size_t>(c)]));
    const T shift = static_cast<T>(cfg.mean[static_cast<size_t>(c)] / cfg.stddev[static_cast<size_t>(c)]);
    T* v = resized.data() + c * Q;
    for (int64_t p = 0; p < Q; ++p) v[p] = v[p] * scale - shift;
  }
  return resized;
}

Mask binarize_mask(const Image8& mask, double threshold) {
  if (mask.channels != 1 && mask.channels != 3) {
    throw DataError("binarize_mask: unexpected channel count " + std::to_string(mask.channels));
  }
  Mask out(mask.height, mask.width);
  const int64_t P = mask.height * mask.width;
  for (int64_t p = 0; p < P; ++p) {
    double lum;
    if (mask.channels == 1) {
      lum = mask.data[static_cast<size_t>(p)];
    } else {
      const uint8_t* px = &mask.data[static_cast<size_t>(p * 3)];
      lum = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    }
    out.data[static_cast<size_t>(p)] = lum >= threshold ? 1 : 0;
  }
  return out;
}

template <typename T>
std::pair<Tensor<T>, Mask> load_and_preprocess(const fs::path& image_path,
                                               const fs::path& mask_path,
                                               const PreprocessConfig& cfg) {
  const Image8 image = read_png(image_path);
  if (image.channels != 3) {
    throw DataError(image_path.string() + ": expected an RGB image, got " +
                    std::to_string(image.channels) + " channel(s)");
  }
  const Image8 mask = read_png(mask_path);
  return {preprocess_image<T>(image, cfg), binarize_mask(mask, cfg.mask_threshold)};
}

Image8 mask_to_image(const Mask& mask) {
  Image8 out(mask.width, mask.height, 1);
  for (size_t i = 0; i < mask.data.size(); ++i) out.data[i] = mask.data[i] ? 255 : 0;
  return out;
}

Image8 render_prediction(const Mask& mask, const Image8& image, ExportMode mode,
                         const OverlayStyle& style) {
  if (mode == ExportMode::kMask) return mask_to_image(mask);
  if (mask.height != image.height || mask.width != image.width) {
    throw DataError("export_prediction: mask is " + std::to_string(mask.height) + "x" +
                    std::to_string(mask.width) + ", image is " + std::to_string(image.height) +
                    "x" + std::to_string(image.width));
  }
  Image8 out(image.width, image.height, 3);
  const int64_t P = image.width * image.height;
  for (int64_t p = 0; p < P; ++p) {
    for (int64_t c = 0; c < 3; ++c) {
      const uint8_t src = image.data[static_cast<size_t>(p * image.channels + (image.channels == 3 ? c : 0))];
      uint8_t v = src;
      if (mask.data[static_cast<size_t>(p)]) {
        const double blended = (1.0 - style.alpha) * src + style.alpha * style.color[static_cast<size_t>(c)];
        v = static_cast<uint8_t>(std::clamp(std::lround(blended), 0L, 255L));
      }
      out.data[static_cast<size_t>(p * 3 + c)] = v;
    }
  }
  return out;
}

void export_prediction(const Mask& mask, const Image8& image, const fs::path& out_path,
                       ExportMode mode, const OverlayStyle& style) {
  write_png(out_path, render_prediction(mask, image, mode, style));
}

template Tensor<float> preprocess_image(const Image8&, const PreprocessConfig&);
template Tensor<double> preprocess_image(const Image8&, const PreprocessConfig&);
template std::pair<Tensor<float>, Mask> load_and_preprocess(const fs::path&, const fs::path&,
                                                            const PreprocessConfig&);
template std::pair<Tensor<double>, Mask> load_and_preprocess(const fs::path&, const fs::path&,
                                                             const PreprocessConfig&);

}  // namespace rod::data
