#pragma once

// Test fixtures and reference implementations. The reference code is
// deliberately naive (explicit loops, double accumulation) and shares nothing
// with the library kernels beyond the Tensor container.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

#include "rod/config.hpp"
#include "rod/image_io.hpp"
#include "rod/mask.hpp"
#include "rod/params.hpp"
#include "rod/tensor.hpp"

namespace rod::testing {

template <typename T>
Tensor<T> random_tensor(Shape shape, uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor<T> t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.storage()) v = static_cast<T>(u(rng));
  return t;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) return INFINITY;
  double m = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

// Unique directory under the system temp dir, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("rod_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Synthetic road scene: pixels on one side of a random line are freespace.
// Freespace is drawn in a dark gray tone, the rest in a bright textured tone,
// so color alone separates the classes.
struct HalfPlaneSample {
  Image8 image;
  Mask mask;
};

inline HalfPlaneSample half_plane_sample(int64_t size, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double angle = 2.0 * M_PI * u(rng);
  const double nx = std::cos(angle), ny = std::sin(angle);
  const double cx = size * (0.3 + 0.4 * u(rng)), cy = size * (0.3 + 0.4 * u(rng));
  HalfPlaneSample s{Image8(size, size, 3), Mask{}};
  s.mask.height = size;
  s.mask.width = size;
  s.mask.data.assign(static_cast<size_t>(size * size), 0);
  std::uniform_int_distribution<int> noise(-12, 12);
  for (int64_t y = 0; y < size; ++y) {
    for (int64_t x = 0; x < size; ++x) {
      const bool free = (x + 0.5 - cx) * nx + (y + 0.5 - cy) * ny >= 0;
      s.mask.data[static_cast<size_t>(y * size + x)] = free ? 1 : 0;
      const int base[3] = {free ? 70 : 170, free ? 70 : 200, free ? 75 : 120};
      for (int c = 0; c < 3; ++c) {
        s.image.data[static_cast<size_t>((y * size + x) * 3 + c)] =
            static_cast<uint8_t>(std::clamp(base[c] + noise(rng), 0, 255));
      }
    }
  }
  return s;
}

// Triangle-kernel bilinear weight of source index i for output coordinate o,
// half-pixel centers, source coordinate clamped to [0, in - 1].
inline double bilinear_weight(int64_t o, int64_t i, int64_t in, int64_t out) {
  double src = (o + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
  src = std::clamp(src, 0.0, static_cast<double>(in - 1));
  return std::max(0.0, 1.0 - std::abs(src - static_cast<double>(i)));
}

template <typename T>
Tensor<T> ref_resize(const Tensor<T>& x, int64_t oh, int64_t ow) {
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor<T> y({B, C, oh, ow});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox) {
          double acc = 0;
          for (int64_t iy = 0; iy < H; ++iy) {
            const double wy = bilinear_weight(oy, iy, H, oh);
            if (wy == 0) continue;
            for (int64_t ix = 0; ix < W; ++ix) {
              acc += wy * bilinear_weight(ox, ix, W, ow) * static_cast<double>(x.at(b, c, iy, ix));
            }
          }
          y.at(b, c, oy, ox) = static_cast<T>(acc);
        }
  return y;
}

template <typename T>
Tensor<T> ref_conv(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, int64_t stride,
                   int64_t pad) {
  const int64_t B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Co = w.dim(0), K = w.dim(2);
  const int64_t OH = (H + 2 * pad - K) / stride + 1, OW = (W + 2 * pad - K) / stride + 1;
  Tensor<T> y({B, Co, OH, OW});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t o = 0; o < Co; ++o)
      for (int64_t oy = 0; oy < OH; ++oy)
        for (int64_t ox = 0; ox < OW; ++ox) {
          double acc = static_cast<double>(bias[o]);
          for (int64_t i = 0; i < Ci; ++i)
            for (int64_t ky = 0; ky < K; ++ky)
              for (int64_t kx = 0; kx < K; ++kx) {
                const int64_t iy = oy * stride + ky - pad, ix = ox * stride + kx - pad;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                acc += static_cast<double>(w.at(o, i, ky, kx)) * static_cast<double>(x.at(b, i, iy, ix));
              }
          y.at(b, o, oy, ox) = static_cast<T>(acc);
        }
  return y;
}

// Per-pixel normalization across channels with affine gain/shift.
template <typename T>
Tensor<T> ref_channel_norm(const Tensor<T>& x, const Tensor<T>& g, const Tensor<T>& beta, double eps) {
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  Tensor<T> y(x.shape());
  for (int64_t b = 0; b < B; ++b)
    for (int64_t yy = 0; yy < H; ++yy)
      for (int64_t xx = 0; xx < W; ++xx) {
        double mean = 0, var = 0;
        for (int64_t c = 0; c < C; ++c) mean += static_cast<double>(x.at(b, c, yy, xx));
        mean /= static_cast<double>(C);
        for (int64_t c = 0; c < C; ++c) {
          const double d = static_cast<double>(x.at(b, c, yy, xx)) - mean;
          var += d * d;
        }
        var /= static_cast<double>(C);
        for (int64_t c = 0; c < C; ++c) {
          const double n = (static_cast<double>(x.at(b, c, yy, xx)) - mean) / std::sqrt(var + eps);
          y.at(b, c, yy, xx) = static_cast<T>(n * static_cast<double>(g[c]) + static_cast<double>(beta[c]));
        }
      }
  return y;
}

template <typename T>
Tensor<T> ref_relu(Tensor<T> x) {
  for (auto& v : x.storage()) v = v > 0 ? v : T(0);
  return x;
}

template <typename T>
Tensor<T> ref_add(Tensor<T> a, const Tensor<T>& b) {
  for (int64_t i = 0; i < a.numel(); ++i) a[i] += b[i];
  return a;
}

template <typename T>
Tensor<T> ref_conv_block(const Tensor<T>& x, const ConvBlockParams<T>& p, double eps) {
  Tensor<T> h = ref_conv(x, p.conv1.weight, p.conv1.bias, 1, 1);
  if (p.use_norm) h = ref_channel_norm(h, p.norm1.weight, p.norm1.bias, eps);
  h = ref_relu(h);
  h = ref_conv(h, p.conv2.weight, p.conv2.bias, 1, 1);
  if (p.use_norm) h = ref_channel_norm(h, p.norm2.weight, p.norm2.bias, eps);
  return ref_relu(h);
}

// (B, g, g, C) -> (B, C, g, g)
template <typename T>
Tensor<T> ref_to_nchw(const Tensor<T>& x) {
  const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  Tensor<T> y({B, C, H, W});
  for (int64_t b = 0; b < B; ++b)
    for (int64_t h = 0; h < H; ++h)
      for (int64_t w = 0; w < W; ++w)
        for (int64_t c = 0; c < C; ++c) y.at(b, c, h, w) = x.at(b, h, w, c);
  return y;
}

template <typename T>
Tensor<T> ref_concat(const std::vector<Tensor<T>>& parts) {
  const int64_t B = parts[0].dim(0), H = parts[0].dim(2), W = parts[0].dim(3);
  int64_t C = 0;
  for (const auto& p : parts) C += p.dim(1);
  Tensor<T> y({B, C, H, W});
  for (int64_t b = 0; b < B; ++b) {
    int64_t base = 0;
    for (const auto& p : parts) {
      for (int64_t c = 0; c < p.dim(1); ++c)
        for (int64_t h = 0; h < H; ++h)
          for (int64_t w = 0; w < W; ++w) y.at(b, base + c, h, w) = p.at(b, c, h, w);
      base += p.dim(1);
    }
  }
  return y;
}

// Decoder dataflow written out directly from its definition.
template <typename T>
Tensor<T> ref_decoder(const std::vector<Tensor<T>>& latents, const Tensor<T>& image_embedding,
                      const ModelConfig& cfg, const DecoderParams<T>& p, int64_t out_h, int64_t out_w) {
  Tensor<T> s;
  for (size_t i = 0; i < latents.size(); ++i) {
    const auto& proj = p.latent_proj[cfg.share_latent_projection ? 0 : i];
    Tensor<T> h = ref_conv(ref_to_nchw(latents[i]), proj.weight, proj.bias, 1, 0);
    s = i == 0 ? h : ref_add(s, h);
  }
  const Tensor<T> x = ref_add(ref_conv_block(s, p.latent_fuse, cfg.norm_eps), s);
  const Tensor<T> f0 = ref_conv(x, p.expand.weight, p.expand.bias, 1, 0);
  const Tensor<T> up1 = ref_resize(f0, 2 * f0.dim(2), 2 * f0.dim(3));
  const Tensor<T> f1 = ref_add(ref_conv_block(up1, p.usl1, cfg.norm_eps), up1);
  const Tensor<T> up2 = ref_resize(f1, 2 * f1.dim(2), 2 * f1.dim(3));
  const Tensor<T> f2 = ref_add(ref_conv_block(up2, p.usl2, cfg.norm_eps), up2);
  const int64_t side = f2.dim(2);
  const Tensor<T> cat = ref_concat<T>({ref_resize(image_embedding, side, side), ref_resize(f0, side, side),
                                       ref_resize(f1, side, side), f2});
  const Tensor<T> fuse = ref_conv(cat, p.fuse.weight, p.fuse.bias, 1, 0);
  const Tensor<T> logits = ref_conv(fuse, p.head.weight, p.head.bias, 1, 0);
  return ref_resize(logits, out_h, out_w);
}

// Pre-norm transformer block on a (B, g, g, C) grid, one token at a time.
template <typename T>
Tensor<T> ref_transformer_block(const Tensor<T>& x, const TransformerBlockParams<T>& p, int64_t heads,
                                double eps) {
  const int64_t B = x.dim(0), N = x.dim(1) * x.dim(2), C = x.dim(3), d = C / heads;
  using Vec = std::vector<double>;
  auto row = [&](const Tensor<T>& t, int64_t b, int64_t n) {
    Vec v(static_cast<size_t>(t.dim(3)));
    for (int64_t c = 0; c < t.dim(3); ++c) v[static_cast<size_t>(c)] = static_cast<double>(t[(b * N + n) * t.dim(3) + c]);
    return v;
  };
  auto ln = [&](const Vec& v, const NormParams<T>& np) {
    double mean = 0, var = 0;
    for (double e : v) mean += e;
    mean /= static_cast<double>(v.size());
    for (double e : v) var += (e - mean) * (e - mean);
    var /= static_cast<double>(v.size());
    Vec o(v.size());
    for (size_t c = 0; c < v.size(); ++c) {
      o[c] = (v[c] - mean) / std::sqrt(var + eps) * static_cast<double>(np.weight[static_cast<int64_t>(c)]) +
             static_cast<double>(np.bias[static_cast<int64_t>(c)]);
    }
    return o;
  };
  auto lin = [&](const Vec& v, const LinearParams<T>& lp) {
    const int64_t out = lp.weight.dim(0), in = lp.weight.dim(1);
    Vec o(static_cast<size_t>(out));
    for (int64_t r = 0; r < out; ++r) {
      double acc = static_cast<double>(lp.bias[r]);
      for (int64_t c = 0; c < in; ++c) acc += static_cast<double>(lp.weight[r * in + c]) * v[static_cast<size_t>(c)];
      o[static_cast<size_t>(r)] = acc;
    }
    return o;
  };

  Tensor<T> y(x.shape());
  for (int64_t b = 0; b < B; ++b) {
    std::vector<Vec> qkv;
    for (int64_t n = 0; n < N; ++n) qkv.push_back(lin(ln(row(x, b, n), p.norm1), p.qkv));
    for (int64_t n = 0; n < N; ++n) {
      Vec mixed(static_cast<size_t>(C), 0.0);
      for (int64_t h = 0; h < heads; ++h) {
        Vec logits(static_cast<size_t>(N));
        double mx = -INFINITY;
        for (int64_t m = 0; m < N; ++m) {
          double dot = 0;
          for (int64_t k = 0; k < d; ++k) {
            dot += qkv[static_cast<size_t>(n)][static_cast<size_t>(h * d + k)] *
                   qkv[static_cast<size_t>(m)][static_cast<size_t>(C + h * d + k)];
          }
          logits[static_cast<size_t>(m)] = dot / std::sqrt(static_cast<double>(d));
          mx = std::max(mx, logits[static_cast<size_t>(m)]);
        }
        double z = 0;
        for (auto& l : logits) z += (l = std::exp(l - mx));
        for (int64_t m = 0; m < N; ++m) {
          for (int64_t k = 0; k < d; ++k) {
            mixed[static_cast<size_t>(h * d + k)] += logits[static_cast<size_t>(m)] / z *
                qkv[static_cast<size_t>(m)][static_cast<size_t>(2 * C + h * d + k)];
          }
        }
      }
      Vec r1 = row(x, b, n);
      const Vec attn = lin(mixed, p.proj);
      for (int64_t c = 0; c < C; ++c) r1[static_cast<size_t>(c)] += attn[static_cast<size_t>(c)];
      Vec hidden = lin(ln(r1, p.norm2), p.fc1);
      for (auto& e : hidden) e = 0.5 * e * (1.0 + std::erf(e / std::sqrt(2.0)));
      const Vec mlp = lin(hidden, p.fc2);
      for (int64_t c = 0; c < C; ++c) {
        y[(b * N + n) * C + c] = static_cast<T>(r1[static_cast<size_t>(c)] + mlp[static_cast<size_t>(c)]);
      }
    }
  }
  return y;
}

inline ModelConfig tiny_config() {
  ModelConfig c;
  c.input_size = 32;
  c.patch_size = 8;
  c.embed_dim = 16;
  c.depth = 2;
  c.num_heads = 2;
  c.decoder_width = 8;
  c.fusion_width = 12;
  c.pos_base_grid = 4;
  return c;
}

}  // namespace rod::testing
