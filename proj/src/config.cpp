#include "rod/config.hpp"

#include <map>
#include <sstream>

#include "rod/error.hpp"
#include "rod/tensor.hpp"

namespace rod {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

int64_t shape_numel(const Shape& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

void expect_shape(const Shape& actual, const Shape& expected, const std::string& what) {
  if (actual != expected) {
    throw ConfigError(what + ": expected shape " + shape_str(expected) + ", got " +
                      shape_str(actual));
  }
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("invalid model config: " + msg); };
  if (input_size < 1 || patch_size < 1) fail("input_size and patch_size must be positive");
  if (input_size % patch_size != 0) {
    fail("input_size " + std::to_string(input_size) + " is not a multiple of patch_size " +
         std::to_string(patch_size));
  }
  if (embed_dim < 1 || num_heads < 1) fail("embed_dim and num_heads must be positive");
  if (embed_dim % num_heads != 0) {
    fail("embed_dim " + std::to_string(embed_dim) + " is not divisible by num_heads " +
         std::to_string(num_heads));
  }
  if (depth < 1) fail("depth must be >= 1");
  if (mlp_ratio < 1) fail("mlp_ratio must be >= 1");
  if (decoder_width < 1) fail("decoder_width must be >= 1");
  if (fusion_width < 1) fail("fusion_width must be >= 1");
  if (num_classes < 2) fail("num_classes must be >= 2");
  if (pos_base_grid < 1) fail("pos_base_grid must be >= 1");
  if (!(norm_eps > 0)) fail("norm_eps must be positive");
}

ModelConfig paper_preset() { return vit_preset("vit_s"); }

ModelConfig desk_preset() {
  ModelConfig cfg;
  cfg.input_size = 128;
  cfg.patch_size = 8;
  cfg.embed_dim = 64;
  cfg.depth = 4;
  cfg.num_heads = 4;
  cfg.decoder_width = 32;
  cfg.fusion_width = 64;
  cfg.pos_base_grid = 16;
  return cfg;
}

ModelConfig vit_preset(const std::string& variant) {
  // width, heads
  static const std::map<std::string, std::pair<int64_t, int64_t>> kVariants = {
      {"vit_h", {1280, 16}}, {"vit_l", {1024, 16}}, {"vit_b", {768, 12}},
      {"vit_s", {384, 6}},   {"vit_t", {192, 3}},
  };
  auto it = kVariants.find(variant);
  if (it == kVariants.end()) throw ConfigError("unknown ViT variant '" + variant + "'");
  ModelConfig cfg;
  cfg.embed_dim = it->second.first;
  cfg.num_heads = it->second.second;
  return cfg;
}

ModelConfig preset_by_name(const std::string& name) {
  if (name == "paper") return paper_preset();
  if (name == "desk") return desk_preset();
  return vit_preset(name);
}

std::vector<std::string> preset_names() {
  return {"paper", "desk", "vit_h", "vit_l", "vit_b", "vit_s", "vit_t"};
}

}  // namespace rod
