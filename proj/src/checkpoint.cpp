#include "rod/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <set>

#include "rod/error.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace rod::ckpt {

namespace {

const char* dtype_name(DType d) { return d == DType::kF32 ? "f32" : "f64"; }

DType dtype_from(const std::string& s, const std::string& source) {
  if (s == "f32") return DType::kF32;
  if (s == "f64") return DType::kF64;
  throw DataError(source + ": unsupported tensor dtype '" + s + "'");
}

uint64_t dtype_size(DType d) { return d == DType::kF32 ? 4 : 8; }

template <typename T>
constexpr DType dtype_of() {
  return sizeof(T) == 4 ? DType::kF32 : DType::kF64;
}

// Copies `count` scalars of `width` bytes, swapping on big-endian hosts.
void copy_le(const uint8_t* src, uint8_t* dst, size_t count, size_t width) {
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(dst, src, count * width);
  } else {
    for (size_t i = 0; i < count; ++i) {
      for (size_t b = 0; b < width; ++b) dst[i * width + b] = src[i * width + width - 1 - b];
    }
  }
}

template <typename Src, typename Dst>
Tensor<Dst> decode_as(const uint8_t* bytes, const Shape& shape) {
  std::vector<Src> raw(static_cast<size_t>(shape_numel(shape)));
  copy_le(bytes, reinterpret_cast<uint8_t*>(raw.data()), raw.size(), sizeof(Src));
  return Tensor<Dst>(shape, std::vector<Dst>(raw.begin(), raw.end()));
}

std::string name_list(const std::vector<std::string>& names) {
  std::string out;
  for (const auto& n : names) out += (out.empty() ? "" : ", ") + n;
  return out;
}

}  // namespace

const TensorEntry* Archive::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

template <typename T>
Tensor<T> Archive::tensor(const TensorEntry& entry) const {
  const uint8_t* bytes = blob.data() + entry.offset;
  return entry.dtype == DType::kF32 ? decode_as<float, T>(bytes, entry.shape)
                                    : decode_as<double, T>(bytes, entry.shape);
}

template <typename T>
void Archive::add(const std::string& name, const Tensor<T>& t) {
  if (find(name)) throw ArgumentError("archive already holds tensor '" + name + "'");
  TensorEntry e;
  e.name = name;
  e.dtype = dtype_of<T>();
  e.shape = t.shape();
  e.offset = blob.size();
  e.length = static_cast<uint64_t>(t.numel()) * sizeof(T);
  blob.resize(blob.size() + e.length);
  copy_le(reinterpret_cast<const uint8_t*>(t.data()), blob.data() + e.offset,
          static_cast<size_t>(t.numel()), sizeof(T));
  entries.push_back(std::move(e));
}

std::vector<uint8_t> encode(const Archive& archive) {
  json manifest;
  manifest["format"] = std::string(kMagic, 8);
  manifest["format_version"] = archive.format_version;
  manifest["config"] = archive.config;
  json tensors = json::array();
  for (const auto& e : archive.entries) {
    tensors.push_back({{"name", e.name},
                       {"dtype", dtype_name(e.dtype)},
                       {"shape", e.shape},
                       {"offset", e.offset},
                       {"length", e.length}});
  }
  manifest["tensors"] = std::move(tensors);
  const std::string text = manifest.dump();

  std::vector<uint8_t> out;
  out.reserve(16 + text.size() + archive.blob.size());
  out.insert(out.end(), kMagic, kMagic + 8);
  uint8_t len[8];
  const uint64_t n = text.size();
  for (int i = 0; i < 8; ++i) len[i] = static_cast<uint8_t>(n >> (8 * i));
  out.insert(out.end(), len, len + 8);
  out.insert(out.end(), text.begin(), text.end());
  out.insert(out.end(), archive.blob.begin(), archive.blob.end());
  return out;
}

Archive decode(const std::vector<uint8_t>& bytes, const std::string& source) {
  if (bytes.size() < 16 || !std::equal(kMagic, kMagic + 8, bytes.begin())) {
    throw DataError(source + ": not a checkpoint archive (bad magic)");
  }
  uint64_t n = 0;
  for (int i = 0; i < 8; ++i) n |= static_cast<uint64_t>(bytes[8 + i]) << (8 * i);
  if (n > bytes.size() - 16) throw DataError(source + ": truncated manifest");
  json manifest;
  try {
    manifest = json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<int64_t>(n));
  } catch (const json::exception& e) {
    throw DataError(source + ": malformed manifest: " + e.what());
  }

  Archive a;
  try {
    a.format_version = manifest.at("format_version").get<int>();
    if (a.format_version != kFormatVersion) {
      throw DataError(source + ": unsupported checkpoint format version " +
                      std::to_string(a.format_version) + " (this build reads version " +
                      std::to_string(kFormatVersion) + ")");
    }
    a.config = manifest.value("config", json::object());
    a.blob.assign(bytes.begin() + 16 + static_cast<int64_t>(n), bytes.end());
    for (const auto& t : manifest.at("tensors")) {
      TensorEntry e;
      e.name = t.at("name").get<std::string>();
      e.dtype = dtype_from(t.at("dtype").get<std::string>(), source);
      e.shape = t.at("shape").get<Shape>();
      e.offset = t.at("offset").get<uint64_t>();
      e.length = t.at("length").get<uint64_t>();
      for (int64_t d : e.shape) {
        if (d < 0) throw DataError(source + ": negative dimension in '" + e.name + "'");
      }
      if (e.length != static_cast<uint64_t>(shape_numel(e.shape)) * dtype_size(e.dtype)) {
        throw DataError(source + ": tensor '" + e.name + "' length does not match its shape");
      }
      if (e.offset > a.blob.size() || e.length > a.blob.size() - e.offset) {
        throw DataError(source + ": tensor '" + e.name + "' lies outside the blob");
      }
      if (a.find(e.name)) throw DataError(source + ": duplicate tensor '" + e.name + "'");
      a.entries.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw DataError(source + ": malformed manifest: " + e.what());
  }

  std::vector<const TensorEntry*> sorted;
  for (const auto& e : a.entries) sorted.push_back(&e);
  std::sort(sorted.begin(), sorted.end(),
            [](const TensorEntry* x, const TensorEntry* y) { return x->offset < y->offset; });
  for (size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i - 1]->offset + sorted[i - 1]->length > sorted[i]->offset) {
      throw DataError(source + ": tensors '" + sorted[i - 1]->name + "' and '" + sorted[i]->name +
                      "' overlap");
    }
  }
  return a;
}

void write_archive(const fs::path& path, const Archive& archive) {
  const std::vector<uint8_t> bytes = encode(archive);
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write checkpoint " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Archive read_archive(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint " + path.string());
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode(bytes, path.string());
}

json config_to_json(const ModelConfig& c) {
  return {{"input_size", c.input_size},
          {"patch_size", c.patch_size},
          {"embed_dim", c.embed_dim},
          {"depth", c.depth},
          {"num_heads", c.num_heads},
          {"mlp_ratio", c.mlp_ratio},
          {"decoder_width", c.decoder_width},
          {"fusion_width", c.fusion_width},
          {"num_classes", c.num_classes},
          {"pos_base_grid", c.pos_base_grid},
          {"use_norm", c.use_norm},
          {"share_latent_projection", c.share_latent_projection},
          {"norm_eps", c.norm_eps}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  try {
    c.input_size = j.at("input_size").get<int64_t>();
    c.patch_size = j.at("patch_size").get<int64_t>();
    c.embed_dim = j.at("embed_dim").get<int64_t>();
    c.depth = j.at("depth").get<int64_t>();
    c.num_heads = j.at("num_heads").get<int64_t>();
    c.mlp_ratio = j.at("mlp_ratio").get<int64_t>();
    c.decoder_width = j.at("decoder_width").get<int64_t>();
    c.fusion_width = j.at("fusion_width").get<int64_t>();
    c.num_classes = j.at("num_classes").get<int64_t>();
    c.pos_base_grid = j.at("pos_base_grid").get<int64_t>();
    c.use_norm = j.at("use_norm").get<bool>();
    c.share_latent_projection = j.at("share_latent_projection").get<bool>();
    c.norm_eps = j.at("norm_eps").get<double>();
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint config incomplete: ") + e.what());
  }
  c.validate();
  return c;
}

template <typename T>
Archive to_archive(const Model<T>& model) {
  Archive a;
  a.config = config_to_json(model.config);
  model.visit([&](const std::string& name, const Tensor<T>& t) {
    if (!t.all_finite()) throw NumericalError("save_checkpoint: non-finite values in " + name);
    a.add(name, t);
  });
  return a;
}

template <typename T>
Model<T> from_archive(const Archive& archive) {
  Model<T> model = Model<T>::zeros(config_from_json(archive.config));
  std::vector<std::string> missing, mismatched, unexpected;
  std::set<std::string> expected;
  model.visit([&](const std::string& name, Tensor<T>& t) {
    expected.insert(name);
    const TensorEntry* e = archive.find(name);
    if (!e) {
      missing.push_back(name);
      return;
    }
    if (e->shape != t.shape()) {
      mismatched.push_back(name + " " + shape_str(e->shape) + " vs " + shape_str(t.shape()));
      return;
    }
    t = archive.tensor<T>(*e);
  });
  for (const auto& e : archive.entries) {
    if (!expected.count(e.name)) unexpected.push_back(e.name);
  }
  if (!missing.empty() || !mismatched.empty() || !unexpected.empty()) {
    std::string msg = "checkpoint does not match model config:";
    if (!missing.empty()) msg += "\n  missing: " + name_list(missing);
    if (!mismatched.empty()) msg += "\n  shape mismatch: " + name_list(mismatched);
    if (!unexpected.empty()) msg += "\n  unexpected: " + name_list(unexpected);
    throw DataError(msg);
  }
  return model;
}

template <typename T>
void save_checkpoint(const Model<T>& model, const fs::path& path) {
  write_archive(path, to_archive(model));
}

template <typename T>
Model<T> load_checkpoint(const fs::path& path) {
  return from_archive<T>(read_archive(path));
}

TranslationTable sam_translation_table() {
  const std::string p = R"(^image_encoder\.)";
  const std::string wb = R"((weight|bias)$)";
  auto rule = [](const std::string& pat, const std::string& rep) {
    return NameRule{std::regex(pat), rep};
  };
  return {
      rule(p + R"(patch_embed\.proj\.)" + wb, "encoder.patch_embed.$1"),
      rule(p + R"(pos_embed$)", "encoder.pos_embed"),
      rule(p + R"(blocks\.(\d+)\.norm1\.)" + wb, "encoder.blocks.$1.norm1.$2"),
      rule(p + R"(blocks\.(\d+)\.norm2\.)" + wb, "encoder.blocks.$1.norm2.$2"),
      rule(p + R"(blocks\.(\d+)\.attn\.qkv\.)" + wb, "encoder.blocks.$1.attn.qkv.$2"),
      rule(p + R"(blocks\.(\d+)\.attn\.proj\.)" + wb, "encoder.blocks.$1.attn.proj.$2"),
      rule(p + R"(blocks\.(\d+)\.mlp\.(?:lin1|fc1)\.)" + wb, "encoder.blocks.$1.mlp.fc1.$2"),
      rule(p + R"(blocks\.(\d+)\.mlp\.(?:lin2|fc2)\.)" + wb, "encoder.blocks.$1.mlp.fc2.$2"),
      rule(p + R"(neck\.0\.)" + wb, "encoder.neck.conv1.$1"),
      rule(p + R"(neck\.1\.)" + wb, "encoder.neck.norm1.$1"),
      rule(p + R"(neck\.2\.)" + wb, "encoder.neck.conv2.$1"),
      rule(p + R"(neck\.3\.)" + wb, "encoder.neck.norm2.$1"),
  };
}

template <typename T>
ImportReport import_encoder(Model<T>& model, const Archive& source, const TranslationTable& table) {
  std::map<std::string, Tensor<T>*> targets;
  model.encoder.visit([&](const std::string& name, Tensor<T>& t) { targets[name] = &t; });

  ImportReport report;
  std::set<std::string> written;
  for (const auto& e : source.entries) {
    std::string target;
    for (const auto& rule : table) {
      if (std::regex_search(e.name, rule.pattern)) {
        target = std::regex_replace(e.name, rule.pattern, rule.replacement);
        break;
      }
    }
    auto it = target.empty() ? targets.end() : targets.find(target);
    if (it == targets.end()) {
      report.ignored.push_back(e.name);
      continue;
    }
    Tensor<T> value = source.tensor<T>(e);
    Tensor<T>& dst = *it->second;
    if (target == "encoder.pos_embed" && value.rank() == 3 && value.dim(0) == 1 &&
        value.dim(2) == dst.dim(3)) {
      const int64_t side = dst.dim(1), C = dst.dim(3);
      if (value.dim(1) == side * side + 1) {
        std::vector<T> rows(value.storage().begin() + C, value.storage().end());
        value = Tensor<T>({1, side, side, C}, std::move(rows));
      } else if (value.dim(1) == side * side) {
        value.reshape({1, side, side, C});
      }
    }
    if (value.shape() != dst.shape()) {
      throw DataError("import: '" + e.name + "' -> '" + target + "' has shape " +
                      shape_str(value.shape()) + ", model expects " + shape_str(dst.shape()));
    }
    dst = std::move(value);
    written.insert(target);
    report.loaded.push_back(target);
  }
  for (const auto& [name, t] : targets) {
    if (!written.count(name)) report.missing.push_back(name);
  }
  return report;
}

template Tensor<float> Archive::tensor<float>(const TensorEntry&) const;
template Tensor<double> Archive::tensor<double>(const TensorEntry&) const;
template void Archive::add<float>(const std::string&, const Tensor<float>&);
template void Archive::add<double>(const std::string&, const Tensor<double>&);
template Archive to_archive(const Model<float>&);
template Archive to_archive(const Model<double>&);
template Model<float> from_archive(const Archive&);
template Model<double> from_archive(const Archive&);
template void save_checkpoint(const Model<float>&, const fs::path&);
template void save_checkpoint(const Model<double>&, const fs::path&);
template Model<float> load_checkpoint(const fs::path&);
template Model<double> load_checkpoint(const fs::path&);
template ImportReport import_encoder(Model<float>&, const Archive&, const TranslationTable&);
template ImportReport import_encoder(Model<double>&, const Archive&, const TranslationTable&);

}  // namespace rod::ckpt
