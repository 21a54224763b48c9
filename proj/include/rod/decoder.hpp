#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "rod/config.hpp"
#include "rod/encoder.hpp"
#include "rod/kernels.hpp"
#include "rod/params.hpp"
#include "rod/tensor.hpp"

// Trainable segmentation head. Every forward function has an optional cache
// argument; when given, the intermediates needed by decoder_backward are kept.
namespace rod::decoder {

struct OutputSize {
  int64_t height = 0;
  int64_t width = 0;
};

template <typename T>
struct ConvBlockCache {
  Tensor<T> input;
  kernels::ChannelNormCache<T> norm1;
  Tensor<T> act1;  // relu output fed to conv2
  kernels::ChannelNormCache<T> norm2;
  Tensor<T> act2;
};

template <typename T>
struct DecoderCache {
  std::vector<Tensor<T>> latents_nchw;
  ConvBlockCache<T> latent_fuse;
  Tensor<T> fused;  // x
  Tensor<T> feats0;
  ConvBlockCache<T> usl1;
  Tensor<T> feats1;
  ConvBlockCache<T> usl2;
  Tensor<T> concat;
  Tensor<T> fuse_out;
  int64_t grid_side = 0;
  int64_t fusion_side = 0;
};

// Intermediate feature maps, exposed for inspection and shape tests.
template <typename T>
struct DecoderFeatures {
  Tensor<T> x;
  Tensor<T> feats0, feats1, feats2;
  Tensor<T> fuse;
  Tensor<T> logits_pre_resize;
};

// conv -> [norm] -> relu -> conv -> [norm] -> relu (no residual).
template <typename T>
Tensor<T> conv_block(const Tensor<T>& x, const ConvBlockParams<T>& params, double eps,
                     ConvBlockCache<T>* cache);

// Returns dL/dx of the block and accumulates parameter gradients.
template <typename T>
Tensor<T> conv_block_backward(const Tensor<T>& dy, const ConvBlockCache<T>& cache,
                              const ConvBlockParams<T>& params, ConvBlockParams<T>& grads);

// (B, g, g, C) latent -> (B, decoder_width, g, g) via the layer's 1x1 conv.
template <typename T>
Tensor<T> project_latent(const Tensor<T>& latent, int64_t layer_index, const ModelConfig& cfg,
                         const DecoderParams<T>& params);

// x = Block(sum) + sum over the projected latents.
template <typename T>
Tensor<T> fuse_latents(const std::vector<Tensor<T>>& projected, const ModelConfig& cfg,
                       const ConvBlockParams<T>& params, ConvBlockCache<T>* cache = nullptr);

template <typename T>
Tensor<T> channel_expand(const Tensor<T>& x, const ModelConfig& cfg, const ConvParams<T>& params);

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, int64_t factor);

// Upsample layer: u = up2(F); out = Block(u) + u.
template <typename T>
Tensor<T> usl(const Tensor<T>& x, const ModelConfig& cfg, const ConvBlockParams<T>& params,
              ConvBlockCache<T>* cache = nullptr);

// Resizes eb, f0, f1 to the spatial side of f2; f2 is passed through.
template <typename T>
std::array<Tensor<T>, 4> align_features(const Tensor<T>& eb, const Tensor<T>& f0,
                                        const Tensor<T>& f1, const Tensor<T>& f2,
                                        const ModelConfig& cfg);

// concat -> 1x1 fuse -> per-pixel linear head -> resize to out_size.
template <typename T>
Tensor<T> fuse_and_predict(const std::array<Tensor<T>, 4>& aligned, const ModelConfig& cfg,
                           const DecoderParams<T>& params, OutputSize out_size,
                           DecoderFeatures<T>* features = nullptr);

// Full decoder. `out_size` of {0, 0} keeps the native 4g x 4g resolution.
template <typename T>
Tensor<T> decoder_forward(const encoder::EncoderOutput<T>& enc, const ModelConfig& cfg,
                          const DecoderParams<T>& params, OutputSize out_size,
                          DecoderCache<T>* cache = nullptr, DecoderFeatures<T>* features = nullptr);

// Gradients of all decoder parameters given dL/dlogits. The encoder outputs
// are constants; no gradient is produced for them.
template <typename T>
DecoderParams<T> decoder_backward(const Tensor<T>& dlogits, const DecoderCache<T>& cache,
                                  const ModelConfig& cfg, const DecoderParams<T>& params);

// Per-pixel argmax over classes; ties resolve to the lowest class index.
template <typename T>
std::vector<uint8_t> argmax_classes(const Tensor<T>& logits, int64_t batch_index);

}  // namespace rod::decoder
