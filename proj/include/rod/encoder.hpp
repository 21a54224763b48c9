#pragma once

#include <cstdint>
#include <vector>

#include "rod/config.hpp"
#include "rod/params.hpp"
#include "rod/tensor.hpp"

// Frozen ViT feature extractor. Images are (B, 3, S, S); token grids are
// (B, g, g, C) with g = S / p.
namespace rod::encoder {

template <typename T>
struct EncoderOutput {
  std::vector<Tensor<T>> latents;  // H_1..H_D, each (B, g, g, C)
  Tensor<T> image_embedding;       // (B, fusion_width, g, g)
};

// p-strided p x p convolution over the image, returned channels-last.
template <typename T>
Tensor<T> patch_embed(const Tensor<T>& image, const ModelConfig& cfg,
                      const ConvParams<T>& params);

// Learned table (1, P, P, C) resized bilinearly to (1, side, side, C).
template <typename T>
Tensor<T> position_embed(int64_t grid_side, const ModelConfig& cfg, const Tensor<T>& table);

// Global multi-head self-attention over the g*g tokens of each batch item.
// When `weights_out` is given it receives the softmax weights (B, heads, N, N).
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& tokens, const LinearParams<T>& qkv,
                               const LinearParams<T>& proj, int64_t num_heads,
                               Tensor<T>* weights_out = nullptr);

// Pre-norm block: x + MHSA(LN(x)), then + MLP(LN(.)). `block_index` only
// labels numerical errors.
template <typename T>
Tensor<T> transformer_block(const Tensor<T>& x, const TransformerBlockParams<T>& params,
                            const ModelConfig& cfg, int64_t block_index = -1);

// Permute, 1x1 conv, [norm], 3x3 conv, [norm].
template <typename T>
Tensor<T> image_embedding_head(const Tensor<T>& last_latent, const EncoderParams<T>& params,
                               const ModelConfig& cfg);

template <typename T>
EncoderOutput<T> encoder_forward(const Tensor<T>& image, const ModelConfig& cfg,
                                 const EncoderParams<T>& params);

}  // namespace rod::encoder
