#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "rod/config.hpp"
#include "rod/tensor.hpp"

namespace rod {

template <typename T>
struct ConvParams {
  Tensor<T> weight;  // (out, in, k, k)
  Tensor<T> bias;    // (out)

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

// Linear layers store weight as (out, in).
template <typename T>
struct LinearParams {
  Tensor<T> weight;
  Tensor<T> bias;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

template <typename T>
struct NormParams {
  Tensor<T> weight;  // gamma
  Tensor<T> bias;    // beta

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

// conv -> [norm] -> relu -> conv -> [norm] -> relu, channel preserving.
template <typename T>
struct ConvBlockParams {
  ConvParams<T> conv1;
  NormParams<T> norm1;
  ConvParams<T> conv2;
  NormParams<T> norm2;
  bool use_norm = true;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    conv1.visit(prefix + ".conv1", f);
    if (use_norm) norm1.visit(prefix + ".norm1", f);
    conv2.visit(prefix + ".conv2", f);
    if (use_norm) norm2.visit(prefix + ".norm2", f);
  }
};

template <typename T>
struct TransformerBlockParams {
  NormParams<T> norm1;
  LinearParams<T> qkv;   // (3C, C)
  LinearParams<T> proj;  // (C, C)
  NormParams<T> norm2;
  LinearParams<T> fc1;   // (mlp_ratio*C, C)
  LinearParams<T> fc2;   // (C, mlp_ratio*C)

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    norm1.visit(prefix + ".norm1", f);
    qkv.visit(prefix + ".attn.qkv", f);
    proj.visit(prefix + ".attn.proj", f);
    norm2.visit(prefix + ".norm2", f);
    fc1.visit(prefix + ".mlp.fc1", f);
    fc2.visit(prefix + ".mlp.fc2", f);
  }
};

template <typename T>
struct EncoderParams {
  ConvParams<T> patch_embed;  // (C, 3, p, p)
  Tensor<T> pos_embed;        // (1, pos_base_grid, pos_base_grid, C)
  std::vector<TransformerBlockParams<T>> blocks;
  ConvParams<T> neck_conv1;   // 1x1, C -> fusion_width
  NormParams<T> neck_norm1;
  ConvParams<T> neck_conv2;   // 3x3, fusion_width -> fusion_width
  NormParams<T> neck_norm2;
  bool use_norm = true;

  template <typename F>
  void visit(F&& f) {
    patch_embed.visit("encoder.patch_embed", f);
    f(std::string("encoder.pos_embed"), pos_embed);
    for (size_t i = 0; i < blocks.size(); ++i) {
      blocks[i].visit("encoder.blocks." + std::to_string(i), f);
    }
    neck_conv1.visit("encoder.neck.conv1", f);
    if (use_norm) neck_norm1.visit("encoder.neck.norm1", f);
    neck_conv2.visit("encoder.neck.conv2", f);
    if (use_norm) neck_norm2.visit("encoder.neck.norm2", f);
  }
};

template <typename T>
struct DecoderParams {
  std::vector<ConvParams<T>> latent_proj;  // D entries, or 1 when shared
  ConvBlockParams<T> latent_fuse;
  ConvParams<T> expand;                    // 1x1, decoder_width -> fusion_width
  ConvBlockParams<T> usl1;
  ConvBlockParams<T> usl2;
  ConvParams<T> fuse;                      // 1x1, 4*fusion_width -> fusion_width
  ConvParams<T> head;                      // 1x1, fusion_width -> num_classes

  template <typename F>
  void visit(F&& f) {
    for (size_t i = 0; i < latent_proj.size(); ++i) {
      latent_proj[i].visit("decoder.latent_proj." + std::to_string(i), f);
    }
    latent_fuse.visit("decoder.latent_fuse", f);
    expand.visit("decoder.expand", f);
    usl1.visit("decoder.usl1", f);
    usl2.visit("decoder.usl2", f);
    fuse.visit("decoder.fuse", f);
    head.visit("decoder.head", f);
  }

  // Same structure with every tensor zero-filled; used for gradients.
  DecoderParams zeros_like() const;
};

// Named gradient set handed to the optimizer.
template <typename T>
using NamedTensors = std::map<std::string, Tensor<T>>;

template <typename T>
struct Model {
  ModelConfig config;
  EncoderParams<T> encoder;
  DecoderParams<T> decoder;

  // Allocates all parameters with the shapes implied by `cfg`, zero-filled,
  // with norm gains at one.
  static Model zeros(const ModelConfig& cfg);
  // Deterministic random initialization.
  static Model random(const ModelConfig& cfg, uint64_t seed);

  template <typename F>
  void visit(F&& f) {
    encoder.visit(f);
    decoder.visit(f);
  }
  template <typename F>
  void visit(F&& f) const {
    const_cast<Model*>(this)->visit([&](const std::string& name, Tensor<T>& t) {
      f(name, static_cast<const Tensor<T>&>(t));
    });
  }

  std::vector<std::string> parameter_names() const;
  // Throws ArgumentError when the name is unknown.
  Tensor<T>& parameter(const std::string& name);
  int64_t parameter_count() const;
};

// Names the decoder gradients the way the model names its parameters.
template <typename T>
NamedTensors<T> named(DecoderParams<T> grads);

}  // namespace rod
