#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <regex>
#include <string>
#include <vector>

#include "json.hpp"
#include "rod/config.hpp"
#include "rod/params.hpp"

// Archive layout: 8 magic bytes "RODCKPT1", a little-endian u64 manifest
// length, the UTF-8 JSON manifest, then the tensor blob. Tensor bytes are
// little-endian and addressed by (offset, length) relative to the blob start.
namespace rod::ckpt {

inline constexpr char kMagic[8] = {'R', 'O', 'D', 'C', 'K', 'P', 'T', '1'};
inline constexpr int kFormatVersion = 1;

enum class DType { kF32, kF64 };

struct TensorEntry {
  std::string name;
  DType dtype = DType::kF32;
  Shape shape;
  uint64_t offset = 0;
  uint64_t length = 0;
};

struct Archive {
  int format_version = kFormatVersion;
  nlohmann::json config = nlohmann::json::object();
  std::vector<TensorEntry> entries;
  std::vector<uint8_t> blob;

  const TensorEntry* find(const std::string& name) const;
  // Decodes one tensor, converting to T when the stored dtype differs.
  template <typename T>
  Tensor<T> tensor(const TensorEntry& entry) const;
  template <typename T>
  void add(const std::string& name, const Tensor<T>& tensor);
};

// Serialized bytes of an archive.
std::vector<uint8_t> encode(const Archive& archive);
// Validates magic, version, and entry bounds/overlap.
Archive decode(const std::vector<uint8_t>& bytes, const std::string& source = "<memory>");

// Writes to a temporary sibling and renames it into place.
void write_archive(const std::filesystem::path& path, const Archive& archive);
Archive read_archive(const std::filesystem::path& path);

nlohmann::json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j);

template <typename T>
Archive to_archive(const Model<T>& model);
// Throws DataError listing missing, unexpected, and mis-shaped tensors.
template <typename T>
Model<T> from_archive(const Archive& archive);

template <typename T>
void save_checkpoint(const Model<T>& model, const std::filesystem::path& path);
template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path);

// Maps tensor names of an external ViT checkpoint onto `encoder.*` names.
struct NameRule {
  std::regex pattern;
  std::string replacement;
};
using TranslationTable = std::vector<NameRule>;

// SAM / EfficientSAM image-encoder naming (image_encoder.blocks.N.attn.qkv...).
TranslationTable sam_translation_table();

struct ImportReport {
  std::vector<std::string> loaded;          // target names written
  std::vector<std::string> ignored;         // source names with no rule
  std::vector<std::string> missing;         // encoder targets not provided
};

// Copies translated tensors into the model's encoder. A flat (1, N, C)
// position table is reshaped to (1, P, P, C), dropping a leading class-token
// row when N == P*P + 1. Shape mismatches raise DataError.
template <typename T>
ImportReport import_encoder(Model<T>& model, const Archive& source, const TranslationTable& table);

}  // namespace rod::ckpt
