#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rod {

// Architecture hyperparameters shared by the encoder and the decoder.
struct ModelConfig {
  int64_t input_size = 1024;   // square input side S, pixels
  int64_t patch_size = 16;     // p
  int64_t embed_dim = 384;     // C
  int64_t depth = 12;          // D, number of transformer blocks / latents
  int64_t num_heads = 6;
  int64_t mlp_ratio = 4;
  int64_t decoder_width = 128;
  int64_t fusion_width = 256;
  int64_t num_classes = 2;
  int64_t pos_base_grid = 64;  // side of the stored position table
  bool use_norm = true;        // LayerNorm2d after each decoder / neck conv
  bool share_latent_projection = false;
  double norm_eps = 1e-6;

  int64_t grid_side() const noexcept { return input_size / patch_size; }
  int64_t head_dim() const noexcept { return embed_dim / num_heads; }
  int64_t fusion_side() const noexcept { return 4 * grid_side(); }

  // Throws ConfigError on the first violated invariant.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

// Paper configuration: ViT-S encoder at 1024x1024.
ModelConfig paper_preset();
// Desk-scale configuration used by tests and the acceptance suite.
ModelConfig desk_preset();
// ViT-H/L/B/S/T encoder widths at the paper input size.
ModelConfig vit_preset(const std::string& variant);
// Resolves "paper", "desk" or a ViT variant name; throws ConfigError otherwise.
ModelConfig preset_by_name(const std::string& name);
std::vector<std::string> preset_names();

}  // namespace rod
