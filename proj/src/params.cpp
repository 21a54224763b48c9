#include "rod/params.hpp"

#include <cmath>
#include <random>

namespace rod {

namespace {

template <typename T>
ConvParams<T> conv_zeros(int64_t out, int64_t in, int64_t k) {
  return {Tensor<T>({out, in, k, k}), Tensor<T>({out})};
}

template <typename T>
LinearParams<T> linear_zeros(int64_t out, int64_t in) {
  return {Tensor<T>({out, in}), Tensor<T>({out})};
}

template <typename T>
NormParams<T> norm_ones(int64_t c) {
  return {Tensor<T>({c}, T(1)), Tensor<T>({c})};
}

template <typename T>
ConvBlockParams<T> block_zeros(int64_t c, bool use_norm) {
  ConvBlockParams<T> b;
  b.conv1 = conv_zeros<T>(c, c, 3);
  b.conv2 = conv_zeros<T>(c, c, 3);
  if (use_norm) {
    b.norm1 = norm_ones<T>(c);
    b.norm2 = norm_ones<T>(c);
  }
  b.use_norm = use_norm;
  return b;
}

template <typename T>
void fill_normal(Tensor<T>& t, double stddev, std::mt19937_64& rng, bool truncate) {
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : t.storage()) {
    double z = dist(rng);
    while (truncate && std::abs(z) > 2.0) z = dist(rng);
    v = static_cast<T>(z * stddev);
  }
}

// fan_in of a conv (out, in, k, k) or linear (out, in) weight
template <typename T>
double fan_in(const Tensor<T>& w) {
  return static_cast<double>(w.numel() / w.dim(0));
}

}  // namespace

template <typename T>
DecoderParams<T> DecoderParams<T>::zeros_like() const {
  DecoderParams<T> z = *this;
  z.visit([](const std::string&, Tensor<T>& t) { t.fill(T(0)); });
  return z;
}

template <typename T>
Model<T> Model<T>::zeros(const ModelConfig& cfg) {
  cfg.validate();
  Model<T> m;
  m.config = cfg;
  const int64_t C = cfg.embed_dim, F = cfg.fusion_width, W = cfg.decoder_width;
  auto& e = m.encoder;
  e.use_norm = cfg.use_norm;
  e.patch_embed = conv_zeros<T>(C, 3, cfg.patch_size);
  e.pos_embed = Tensor<T>({1, cfg.pos_base_grid, cfg.pos_base_grid, C});
  e.blocks.resize(static_cast<size_t>(cfg.depth));
  for (auto& b : e.blocks) {
    b.norm1 = norm_ones<T>(C);
    b.qkv = linear_zeros<T>(3 * C, C);
    b.proj = linear_zeros<T>(C, C);
    b.norm2 = norm_ones<T>(C);
    b.fc1 = linear_zeros<T>(cfg.mlp_ratio * C, C);
    b.fc2 = linear_zeros<T>(C, cfg.mlp_ratio * C);
  }
  e.neck_conv1 = conv_zeros<T>(F, C, 1);
  e.neck_conv2 = conv_zeros<T>(F, F, 3);
  if (cfg.use_norm) {
    e.neck_norm1 = norm_ones<T>(F);
    e.neck_norm2 = norm_ones<T>(F);
  }

  auto& d = m.decoder;
  const int64_t nproj = cfg.share_latent_projection ? 1 : cfg.depth;
  for (int64_t i = 0; i < nproj; ++i) d.latent_proj.push_back(conv_zeros<T>(W, C, 1));
  d.latent_fuse = block_zeros<T>(W, cfg.use_norm);
  d.expand = conv_zeros<T>(F, W, 1);
  d.usl1 = block_zeros<T>(F, cfg.use_norm);
  d.usl2 = block_zeros<T>(F, cfg.use_norm);
  d.fuse = conv_zeros<T>(F, 4 * F, 1);
  d.head = conv_zeros<T>(cfg.num_classes, F, 1);
  return m;
}

template <typename T>
Model<T> Model<T>::random(const ModelConfig& cfg, uint64_t seed) {
  Model<T> m = zeros(cfg);
  std::mt19937_64 rng(seed);
  auto& e = m.encoder;
  fill_normal(e.patch_embed.weight, 1.0 / std::sqrt(fan_in(e.patch_embed.weight)), rng, false);
  fill_normal(e.pos_embed, 0.02, rng, true);
  for (auto& b : e.blocks) {
    for (auto* w : {&b.qkv.weight, &b.proj.weight, &b.fc1.weight, &b.fc2.weight}) {
      fill_normal(*w, 0.02, rng, true);
    }
  }
  for (auto* w : {&e.neck_conv1.weight, &e.neck_conv2.weight}) {
    fill_normal(*w, 1.0 / std::sqrt(fan_in(*w)), rng, false);
  }
  m.decoder.visit([&](const std::string& name, Tensor<T>& t) {
    if (t.rank() < 2) return;
    const bool is_head = name.rfind("decoder.head", 0) == 0;
    const double gain = is_head ? 1.0 : 2.0;
    fill_normal(t, std::sqrt(gain / fan_in(t)), rng, false);
  });
  return m;
}

template <typename T>
std::vector<std::string> Model<T>::parameter_names() const {
  std::vector<std::string> names;
  visit([&](const std::string& name, const Tensor<T>&) { names.push_back(name); });
  return names;
}

template <typename T>
Tensor<T>& Model<T>::parameter(const std::string& name) {
  Tensor<T>* found = nullptr;
  visit([&](const std::string& n, Tensor<T>& t) {
    if (n == name) found = &t;
  });
  if (!found) throw ArgumentError("unknown parameter '" + name + "'");
  return *found;
}

template <typename T>
int64_t Model<T>::parameter_count() const {
  int64_t n = 0;
  visit([&](const std::string&, const Tensor<T>& t) { n += t.numel(); });
  return n;
}

template <typename T>
NamedTensors<T> named(DecoderParams<T> grads) {
  NamedTensors<T> out;
  grads.visit([&](const std::string& name, Tensor<T>& t) { out.emplace(name, std::move(t)); });
  return out;
}

template struct DecoderParams<float>;
template struct DecoderParams<double>;
template struct Model<float>;
template struct Model<double>;
template NamedTensors<float> named(DecoderParams<float>);
template NamedTensors<double> named(DecoderParams<double>);

}  // namespace rod
