#include "rod/encoder.hpp"

#include <Eigen/Core>
#include <cmath>

#include "rod/kernels.hpp"
#include "rod/trace.hpp"

namespace rod::encoder {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ConstStrided = Eigen::Map<const MatR<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using Strided = Eigen::Map<MatR<T>, 0, Eigen::OuterStride<>>;

template <typename T>
void check_finite(const Tensor<T>& t, const std::string& stage) {
  if (!t.all_finite()) throw NumericalError(stage + ": non-finite values in output");
}

}  // namespace

template <typename T>
Tensor<T> patch_embed(const Tensor<T>& image, const ModelConfig& cfg,
                      const ConvParams<T>& params) {
  if (image.rank() != 4 || image.dim(1) != 3 || image.dim(2) != cfg.input_size ||
      image.dim(3) != cfg.input_size) {
    const int64_t b = image.rank() > 0 ? image.dim(0) : 0;
    throw ConfigError("patch_embed: expected image shape " +
                      shape_str({b, 3, cfg.input_size, cfg.input_size}) + ", got " +
                      shape_str(image.shape()));
  }
  if (cfg.input_size % cfg.patch_size != 0) {
    throw ConfigError("patch_embed: input_size " + std::to_string(cfg.input_size) +
                      " is not a multiple of patch_size " + std::to_string(cfg.patch_size));
  }
  Tensor<T> grid = kernels::conv2d(image, params.weight, params.bias, cfg.patch_size, 0);
  return kernels::nchw_to_nhwc(grid);
}

template <typename T>
Tensor<T> position_embed(int64_t grid_side, const ModelConfig& cfg, const Tensor<T>& table) {
  if (grid_side < 1) throw ArgumentError("position_embed: grid_side must be >= 1");
  expect_shape(table.shape(), {1, cfg.pos_base_grid, cfg.pos_base_grid, cfg.embed_dim},
               "position_embed table");
  return kernels::resize_bilinear_nhwc(table, grid_side, grid_side);
}

template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& tokens, const LinearParams<T>& qkv,
                               const LinearParams<T>& proj, int64_t num_heads,
                               Tensor<T>* weights_out) {
  if (tokens.rank() != 4) {
    throw ConfigError("multi_head_attention: expected (B, g, g, C), got " +
                      shape_str(tokens.shape()));
  }
  const int64_t B = tokens.dim(0), N = tokens.dim(1) * tokens.dim(2), C = tokens.dim(3);
  if (C % num_heads != 0) {
    throw ConfigError("multi_head_attention: C=" + std::to_string(C) +
                      " not divisible by heads=" + std::to_string(num_heads));
  }
  const int64_t d = C / num_heads;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(d)));

  Tensor<T> packed = kernels::linear(tokens, qkv.weight, qkv.bias);  // (B, g, g, 3C)
  Tensor<T> mixed(tokens.shape());
  if (weights_out) *weights_out = Tensor<T>({B, num_heads, N, N});
  trace_op("attention", B * num_heads * N * N * d);

  MatR<T> scores(N, N);
  for (int64_t b = 0; b < B; ++b) {
    const T* base = packed.data() + b * N * 3 * C;
    for (int64_t h = 0; h < num_heads; ++h) {
      ConstStrided<T> q(base + h * d, N, d, Eigen::OuterStride<>(3 * C));
      ConstStrided<T> k(base + C + h * d, N, d, Eigen::OuterStride<>(3 * C));
      ConstStrided<T> v(base + 2 * C + h * d, N, d, Eigen::OuterStride<>(3 * C));
      scores.noalias() = q * k.transpose();
      scores *= scale;
      kernels::softmax_rows(scores.data(), N, N);
      if (weights_out) {
        std::copy_n(scores.data(), N * N, weights_out->data() + (b * num_heads + h) * N * N);
      }
      Strided<T>(mixed.data() + b * N * C + h * d, N, d, Eigen::OuterStride<>(C)).noalias() =
          scores * v;
    }
  }
  return kernels::linear(mixed, proj.weight, proj.bias);
}

template <typename T>
Tensor<T> transformer_block(const Tensor<T>& x, const TransformerBlockParams<T>& params,
                            const ModelConfig& cfg, int64_t block_index) {
  const std::string label = "transformer block " + std::to_string(block_index);
  if (x.rank() != 4 || x.dim(3) != cfg.embed_dim) {
    throw ConfigError(label + ": expected (B, g, g, " + std::to_string(cfg.embed_dim) +
                      "), got " + shape_str(x.shape()));
  }
  if (!x.all_finite()) throw NumericalError(label + ": non-finite input");

  Tensor<T> h = kernels::layer_norm(x, params.norm1.weight, params.norm1.bias, cfg.norm_eps);
  Tensor<T> attn = multi_head_attention(h, params.qkv, params.proj, cfg.num_heads);
  check_finite(attn, label + " attention");
  Tensor<T> out = x;
  out += attn;

  h = kernels::layer_norm(out, params.norm2.weight, params.norm2.bias, cfg.norm_eps);
  Tensor<T> hidden = kernels::linear(h, params.fc1.weight, params.fc1.bias);
  kernels::gelu_inplace(hidden);
  Tensor<T> mlp = kernels::linear(hidden, params.fc2.weight, params.fc2.bias);
  check_finite(mlp, label + " mlp");
  out += mlp;
  return out;
}

template <typename T>
Tensor<T> image_embedding_head(const Tensor<T>& last_latent, const EncoderParams<T>& params,
                               const ModelConfig& cfg) {
  if (last_latent.rank() != 4 || last_latent.dim(3) != cfg.embed_dim ||
      last_latent.dim(1) != last_latent.dim(2)) {
    throw ConfigError("image_embedding_head: expected (B, g, g, " +
                      std::to_string(cfg.embed_dim) + "), got " + shape_str(last_latent.shape()));
  }
  Tensor<T> f = kernels::nhwc_to_nchw(last_latent);
  f = kernels::conv2d(f, params.neck_conv1.weight, params.neck_conv1.bias, 1, 0);
  if (cfg.use_norm) {
    f = kernels::channel_norm<T>(f, params.neck_norm1.weight, params.neck_norm1.bias,
                                 cfg.norm_eps, nullptr);
  }
  f = kernels::conv2d(f, params.neck_conv2.weight, params.neck_conv2.bias, 1, 1);
  if (cfg.use_norm) {
    f = kernels::channel_norm<T>(f, params.neck_norm2.weight, params.neck_norm2.bias,
                                 cfg.norm_eps, nullptr);
  }
  return f;
}

template <typename T>
EncoderOutput<T> encoder_forward(const Tensor<T>& image, const ModelConfig& cfg,
                                 const EncoderParams<T>& params) {
  cfg.validate();
  if (static_cast<int64_t>(params.blocks.size()) != cfg.depth) {
    throw ConfigError("encoder_forward: parameters hold " + std::to_string(params.blocks.size()) +
                      " blocks, config depth is " + std::to_string(cfg.depth));
  }
  if (!image.all_finite()) throw NumericalError("encoder_forward: non-finite input image");

  Tensor<T> x = patch_embed(image, cfg, params.patch_embed);
  const int64_t g = cfg.grid_side();
  const Tensor<T> pos = position_embed(g, cfg, params.pos_embed);
  const int64_t per_item = g * g * cfg.embed_dim;
  for (int64_t b = 0; b < x.dim(0); ++b) {
    T* dst = x.data() + b * per_item;
    for (int64_t i = 0; i < per_item; ++i) dst[i] += pos[i];
  }

  EncoderOutput<T> out;
  out.latents.reserve(static_cast<size_t>(cfg.depth));
  for (int64_t i = 0; i < cfg.depth; ++i) {
    const Tensor<T>& prev = i == 0 ? x : out.latents.back();
    out.latents.push_back(transformer_block(prev, params.blocks[static_cast<size_t>(i)], cfg, i));
  }
  out.image_embedding = image_embedding_head(out.latents.back(), params, cfg);
  check_finite(out.image_embedding, "image embedding head");
  return out;
}

#define ROD_INSTANTIATE_ENCODER(T)                                                               \
  template Tensor<T> patch_embed(const Tensor<T>&, const ModelConfig&, const ConvParams<T>&);    \
  template Tensor<T> position_embed(int64_t, const ModelConfig&, const Tensor<T>&);              \
  template Tensor<T> multi_head_attention(const Tensor<T>&, const LinearParams<T>&,              \
                                          const LinearParams<T>&, int64_t, Tensor<T>*);          \
  template Tensor<T> transformer_block(const Tensor<T>&, const TransformerBlockParams<T>&,       \
                                       const ModelConfig&, int64_t);                             \
  template Tensor<T> image_embedding_head(const Tensor<T>&, const EncoderParams<T>&,             \
                                          const ModelConfig&);                                   \
  template EncoderOutput<T> encoder_forward(const Tensor<T>&, const ModelConfig&,                \
                                            const EncoderParams<T>&);

ROD_INSTANTIATE_ENCODER(float)
ROD_INSTANTIATE_ENCODER(double)

}  // namespace rod::encoder
