#include "rod/decoder.hpp"

#include <algorithm>

#include "rod/trace.hpp"

namespace rod::decoder {

namespace {

template <typename T>
const ConvParams<T>& projection_for(const DecoderParams<T>& params, int64_t layer_index) {
  return params.latent_proj.size() == 1 ? params.latent_proj.front()
                                        : params.latent_proj[static_cast<size_t>(layer_index)];
}

template <typename T>
ConvParams<T>& projection_for(DecoderParams<T>& params, int64_t layer_index) {
  return params.latent_proj.size() == 1 ? params.latent_proj.front()
                                        : params.latent_proj[static_cast<size_t>(layer_index)];
}

template <typename T>
void check_channels(const Tensor<T>& x, int64_t channels, const std::string& what) {
  if (x.rank() != 4 || x.dim(1) != channels) {
    throw ConfigError(what + ": expected " + std::to_string(channels) + " channels, got shape " +
                      shape_str(x.shape()));
  }
}

// Channels [first, first + count) of an NCHW tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& x, int64_t first, int64_t count) {
  const int64_t B = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
  Tensor<T> y({B, count, x.dim(2), x.dim(3)});
  for (int64_t b = 0; b < B; ++b) {
    std::copy_n(x.data() + (b * C + first) * P, count * P, y.data() + b * count * P);
  }
  return y;
}

}  // namespace

template <typename T>
Tensor<T> conv_block(const Tensor<T>& x, const ConvBlockParams<T>& params, double eps,
                     ConvBlockCache<T>* cache) {
  if (cache) cache->input = x;
  Tensor<T> h = kernels::conv2d(x, params.conv1.weight, params.conv1.bias, 1, 1);
  if (params.use_norm) {
    h = kernels::channel_norm(h, params.norm1.weight, params.norm1.bias, eps,
                              cache ? &cache->norm1 : nullptr);
  }
  kernels::relu_inplace(h);
  if (cache) cache->act1 = h;
  h = kernels::conv2d(h, params.conv2.weight, params.conv2.bias, 1, 1);
  if (params.use_norm) {
    h = kernels::channel_norm(h, params.norm2.weight, params.norm2.bias, eps,
                              cache ? &cache->norm2 : nullptr);
  }
  kernels::relu_inplace(h);
  if (cache) cache->act2 = h;
  return h;
}

template <typename T>
Tensor<T> conv_block_backward(const Tensor<T>& dy, const ConvBlockCache<T>& cache,
                              const ConvBlockParams<T>& params, ConvBlockParams<T>& grads) {
  Tensor<T> g = dy;
  kernels::relu_backward_inplace(g, cache.act2);
  if (params.use_norm) {
    g = kernels::channel_norm_backward(g, cache.norm2, params.norm2.weight, grads.norm2.weight,
                                       grads.norm2.bias);
  }
  Tensor<T> d_act1;
  kernels::conv2d_backward(cache.act1, params.conv2.weight, g, 1, 1, &d_act1,
                           grads.conv2.weight, grads.conv2.bias);
  kernels::relu_backward_inplace(d_act1, cache.act1);
  if (params.use_norm) {
    d_act1 = kernels::channel_norm_backward(d_act1, cache.norm1, params.norm1.weight,
                                            grads.norm1.weight, grads.norm1.bias);
  }
  Tensor<T> d_in;
  kernels::conv2d_backward(cache.input, params.conv1.weight, d_act1, 1, 1, &d_in,
                           grads.conv1.weight, grads.conv1.bias);
  return d_in;
}

template <typename T>
Tensor<T> project_latent(const Tensor<T>& latent, int64_t layer_index, const ModelConfig& cfg,
                         const DecoderParams<T>& params) {
  if (layer_index < 0 || layer_index >= cfg.depth) {
    throw ArgumentError("project_latent: layer index " + std::to_string(layer_index) +
                        " out of range for depth " + std::to_string(cfg.depth));
  }
  if (latent.rank() != 4 || latent.dim(3) != cfg.embed_dim) {
    throw ConfigError("project_latent: expected (B, g, g, " + std::to_string(cfg.embed_dim) +
                      "), got " + shape_str(latent.shape()));
  }
  const ConvParams<T>& proj = projection_for(params, layer_index);
  return kernels::conv2d(kernels::nhwc_to_nchw(latent), proj.weight, proj.bias, 1, 0);
}

template <typename T>
Tensor<T> fuse_latents(const std::vector<Tensor<T>>& projected, const ModelConfig& cfg,
                       const ConvBlockParams<T>& params, ConvBlockCache<T>* cache) {
  if (projected.empty()) throw ArgumentError("fuse_latents: empty latent list");
  Tensor<T> sum = projected.front();
  for (size_t i = 1; i < projected.size(); ++i) {
    if (projected[i].shape() != sum.shape()) {
      throw ArgumentError("fuse_latents: latent " + std::to_string(i) + " has shape " +
                          shape_str(projected[i].shape()) + ", expected " + shape_str(sum.shape()));
    }
    sum += projected[i];
  }
  Tensor<T> out = conv_block(sum, params, cfg.norm_eps, cache);
  out += sum;
  return out;
}

template <typename T>
Tensor<T> channel_expand(const Tensor<T>& x, const ModelConfig& cfg, const ConvParams<T>& params) {
  check_channels(x, cfg.decoder_width, "channel_expand");
  return kernels::conv2d(x, params.weight, params.bias, 1, 0);
}

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& x, int64_t factor) {
  if (factor < 1) throw ArgumentError("bilinear_upsample: factor must be >= 1");
  if (x.rank() != 4) throw ConfigError("bilinear_upsample: expected NCHW, got " + shape_str(x.shape()));
  return kernels::resize_bilinear(x, x.dim(2) * factor, x.dim(3) * factor);
}

template <typename T>
Tensor<T> usl(const Tensor<T>& x, const ModelConfig& cfg, const ConvBlockParams<T>& params,
              ConvBlockCache<T>* cache) {
  check_channels(x, cfg.fusion_width, "usl");
  Tensor<T> up = bilinear_upsample(x, 2);
  Tensor<T> out = conv_block(up, params, cfg.norm_eps, cache);
  out += up;
  return out;
}

template <typename T>
std::array<Tensor<T>, 4> align_features(const Tensor<T>& eb, const Tensor<T>& f0,
                                        const Tensor<T>& f1, const Tensor<T>& f2,
                                        const ModelConfig& cfg) {
  check_channels(eb, cfg.fusion_width, "align_features image embedding");
  check_channels(f0, cfg.fusion_width, "align_features feats0");
  check_channels(f1, cfg.fusion_width, "align_features feats1");
  check_channels(f2, cfg.fusion_width, "align_features feats2");
  const int64_t h = f2.dim(2), w = f2.dim(3);
  return {kernels::resize_bilinear(eb, h, w), kernels::resize_bilinear(f0, h, w),
          kernels::resize_bilinear(f1, h, w), f2};
}

template <typename T>
Tensor<T> fuse_and_predict(const std::array<Tensor<T>, 4>& aligned, const ModelConfig& cfg,
                           const DecoderParams<T>& params, OutputSize out_size,
                           DecoderFeatures<T>* features) {
  for (const auto& a : aligned) {
    if (a.shape() != aligned[0].shape()) {
      throw ArgumentError("fuse_and_predict: mismatched aligned shapes " +
                          shape_str(aligned[0].shape()) + " and " + shape_str(a.shape()));
    }
  }
  check_channels(aligned[0], cfg.fusion_width, "fuse_and_predict");
  Tensor<T> cat = kernels::concat_channels<T>({&aligned[0], &aligned[1], &aligned[2], &aligned[3]});
  Tensor<T> fuse = kernels::conv2d(cat, params.fuse.weight, params.fuse.bias, 1, 0);
  Tensor<T> logits = kernels::conv2d(fuse, params.head.weight, params.head.bias, 1, 0);
  if (features) {
    features->fuse = fuse;
    features->logits_pre_resize = logits;
  }
  if (out_size.height > 0 && out_size.width > 0) {
    logits = kernels::resize_bilinear(logits, out_size.height, out_size.width);
  }
  return logits;
}

template <typename T>
Tensor<T> decoder_forward(const encoder::EncoderOutput<T>& enc, const ModelConfig& cfg,
                          const DecoderParams<T>& params, OutputSize out_size,
                          DecoderCache<T>* cache, DecoderFeatures<T>* features) {
  if (static_cast<int64_t>(enc.latents.size()) != cfg.depth) {
    throw ConfigError("decoder_forward: got " + std::to_string(enc.latents.size()) +
                      " latents, expected " + std::to_string(cfg.depth));
  }
  std::vector<Tensor<T>> projected;
  projected.reserve(enc.latents.size());
  if (cache) cache->latents_nchw.clear();
  for (int64_t i = 0; i < cfg.depth; ++i) {
    const Tensor<T>& latent = enc.latents[static_cast<size_t>(i)];
    if (cache) {
      if (latent.rank() != 4 || latent.dim(3) != cfg.embed_dim) {
        throw ConfigError("decoder_forward: latent " + std::to_string(i) + " has shape " +
                          shape_str(latent.shape()));
      }
      cache->latents_nchw.push_back(kernels::nhwc_to_nchw(latent));
      const ConvParams<T>& proj = projection_for(params, i);
      projected.push_back(
          kernels::conv2d(cache->latents_nchw.back(), proj.weight, proj.bias, 1, 0));
    } else {
      projected.push_back(project_latent(latent, i, cfg, params));
    }
  }
  Tensor<T> x = fuse_latents(projected, cfg, params.latent_fuse, cache ? &cache->latent_fuse : nullptr);
  projected.clear();
  Tensor<T> f0 = channel_expand(x, cfg, params.expand);
  Tensor<T> f1 = usl(f0, cfg, params.usl1, cache ? &cache->usl1 : nullptr);
  Tensor<T> f2 = usl(f1, cfg, params.usl2, cache ? &cache->usl2 : nullptr);
  auto aligned = align_features(enc.image_embedding, f0, f1, f2, cfg);

  DecoderFeatures<T> local;
  DecoderFeatures<T>* feats = features ? features : (cache ? &local : nullptr);
  Tensor<T> logits = fuse_and_predict(aligned, cfg, params, out_size, feats);

  if (cache) {
    cache->fused = x;
    cache->feats0 = f0;
    cache->feats1 = f1;
    cache->concat = kernels::concat_channels<T>({&aligned[0], &aligned[1], &aligned[2], &aligned[3]});
    cache->fuse_out = feats->fuse;
    cache->grid_side = f0.dim(2);
    cache->fusion_side = f2.dim(2);
  }
  if (features) {
    features->x = std::move(x);
    features->feats0 = std::move(f0);
    features->feats1 = std::move(f1);
    features->feats2 = std::move(f2);
  }
  return logits;
}

template <typename T>
DecoderParams<T> decoder_backward(const Tensor<T>& dlogits, const DecoderCache<T>& cache,
                                  const ModelConfig& cfg, const DecoderParams<T>& params) {
  DecoderParams<T> grads = params.zeros_like();
  const int64_t F = cfg.fusion_width, g = cache.grid_side, s = cache.fusion_side;

  Tensor<T> d = kernels::resize_bilinear_backward(dlogits, s, s);
  Tensor<T> d_fuse;
  kernels::conv2d_backward(cache.fuse_out, params.head.weight, d, 1, 0, &d_fuse,
                           grads.head.weight, grads.head.bias);
  Tensor<T> d_cat;
  kernels::conv2d_backward(cache.concat, params.fuse.weight, d_fuse, 1, 0, &d_cat,
                           grads.fuse.weight, grads.fuse.bias);
  // Slot 0 is the frozen image embedding: no gradient needed.
  Tensor<T> d_f0 = kernels::resize_bilinear_backward(slice_channels(d_cat, F, F), g, g);
  Tensor<T> d_f1 = kernels::resize_bilinear_backward(slice_channels(d_cat, 2 * F, F), 2 * g, 2 * g);
  Tensor<T> d_f2 = slice_channels(d_cat, 3 * F, F);

  // f2 = Block(u2) + u2, u2 = up(f1)
  Tensor<T> d_u2 = conv_block_backward(d_f2, cache.usl2, params.usl2, grads.usl2);
  d_u2 += d_f2;
  d_f1 += kernels::resize_bilinear_backward(d_u2, 2 * g, 2 * g);

  Tensor<T> d_u1 = conv_block_backward(d_f1, cache.usl1, params.usl1, grads.usl1);
  d_u1 += d_f1;
  d_f0 += kernels::resize_bilinear_backward(d_u1, g, g);

  Tensor<T> d_x;
  kernels::conv2d_backward(cache.fused, params.expand.weight, d_f0, 1, 0, &d_x,
                           grads.expand.weight, grads.expand.bias);

  // x = Block(s) + s
  Tensor<T> d_sum = conv_block_backward(d_x, cache.latent_fuse, params.latent_fuse, grads.latent_fuse);
  d_sum += d_x;

  for (int64_t i = 0; i < cfg.depth; ++i) {
    ConvParams<T>& gp = projection_for(grads, i);
    kernels::conv2d_backward<T>(cache.latents_nchw[static_cast<size_t>(i)],
                                projection_for(params, i).weight, d_sum, 1, 0, nullptr,
                                gp.weight, gp.bias);
  }
  return grads;
}

template <typename T>
std::vector<uint8_t> argmax_classes(const Tensor<T>& logits, int64_t batch_index) {
  const int64_t K = logits.dim(1), P = logits.dim(2) * logits.dim(3);
  std::vector<uint8_t> out(static_cast<size_t>(P), 0);
  const T* base = logits.data() + batch_index * K * P;
  for (int64_t p = 0; p < P; ++p) {
    int64_t best = 0;
    T best_v = base[p];
    for (int64_t k = 1; k < K; ++k) {
      const T v = base[k * P + p];
      if (v > best_v) {
        best = k;
        best_v = v;
      }
    }
    out[static_cast<size_t>(p)] = static_cast<uint8_t>(best);
  }
  return out;
}

#define ROD_INSTANTIATE_DECODER(T)                                                               \
  template Tensor<T> conv_block(const Tensor<T>&, const ConvBlockParams<T>&, double,            \
                                ConvBlockCache<T>*);                                             \
  template Tensor<T> conv_block_backward(const Tensor<T>&, const ConvBlockCache<T>&,             \
                                         const ConvBlockParams<T>&, ConvBlockParams<T>&);        \
  template Tensor<T> project_latent(const Tensor<T>&, int64_t, const ModelConfig&,               \
                                    const DecoderParams<T>&);                                    \
  template Tensor<T> fuse_latents(const std::vector<Tensor<T>>&, const ModelConfig&,             \
                                  const ConvBlockParams<T>&, ConvBlockCache<T>*);                \
  template Tensor<T> channel_expand(const Tensor<T>&, const ModelConfig&, const ConvParams<T>&); \
  template Tensor<T> bilinear_upsample(const Tensor<T>&, int64_t);                               \
  template Tensor<T> usl(const Tensor<T>&, const ModelConfig&, const ConvBlockParams<T>&,        \
                         ConvBlockCache<T>*);                                                    \
  template std::array<Tensor<T>, 4> align_features(const Tensor<T>&, const Tensor<T>&,           \
                                                   const Tensor<T>&, const Tensor<T>&,           \
                                                   const ModelConfig&);                          \
  template Tensor<T> fuse_and_predict(const std::array<Tensor<T>, 4>&, const ModelConfig&,       \
                                      const DecoderParams<T>&, OutputSize, DecoderFeatures<T>*); \
  template Tensor<T> decoder_forward(const encoder::EncoderOutput<T>&, const ModelConfig&,       \
                                     const DecoderParams<T>&, OutputSize, DecoderCache<T>*,      \
                                     DecoderFeatures<T>*);                                       \
  template DecoderParams<T> decoder_backward(const Tensor<T>&, const DecoderCache<T>&,           \
                                             const ModelConfig&, const DecoderParams<T>&);       \
  template std::vector<uint8_t> argmax_classes(const Tensor<T>&, int64_t);

ROD_INSTANTIATE_DECODER(float)
ROD_INSTANTIATE_DECODER(double)

}  // namespace rod::decoder
