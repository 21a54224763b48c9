#include "rod/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "rod/trace.hpp"

namespace rod::kernels {

namespace {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using StridedMap = Eigen::Map<MatR<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const MatR<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstMap = Eigen::Map<const MatR<T>>;
template <typename T>
using Map = Eigen::Map<MatR<T>>;

// Upper bound on im2col buffer elements per tile.
constexpr int64_t kColBudget = int64_t{1} << 22;

struct ConvGeometry {
  int64_t batch, cin, h, w, cout, k, stride, pad, oh, ow;
  int64_t patch() const { return cin * k * k; }
  int64_t out_pixels() const { return oh * ow; }
  bool pointwise() const { return k == 1 && stride == 1 && pad == 0; }
  int64_t tile() const {
    return std::clamp<int64_t>(kColBudget / std::max<int64_t>(patch(), 1), 1, out_pixels());
  }
};

template <typename T>
ConvGeometry conv_geometry(const Tensor<T>& x, const Tensor<T>& weight, int64_t stride,
                           int64_t pad) {
  if (x.rank() != 4) throw ConfigError("conv2d: input must be rank 4, got " + shape_str(x.shape()));
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3)) {
    throw ConfigError("conv2d: weight must be (Cout, Cin, k, k), got " + shape_str(weight.shape()));
  }
  if (weight.dim(1) != x.dim(1)) {
    throw ConfigError("conv2d: input has " + std::to_string(x.dim(1)) + " channels, weight expects " +
                      std::to_string(weight.dim(1)));
  }
  ConvGeometry g{x.dim(0), x.dim(1), x.dim(2), x.dim(3), weight.dim(0), weight.dim(2),
                 stride, pad, 0, 0};
  g.oh = (g.h + 2 * pad - g.k) / stride + 1;
  g.ow = (g.w + 2 * pad - g.k) / stride + 1;
  if (g.oh < 1 || g.ow < 1) {
    throw ConfigError("conv2d: kernel larger than padded input " + shape_str(x.shape()));
  }
  return g;
}

// Fills col (patch x count) for output pixels [p0, p0 + count) of one image.
template <typename T>
void im2col(const T* img, const ConvGeometry& g, int64_t p0, int64_t count, T* col) {
  for (int64_t ci = 0; ci < g.cin; ++ci) {
    const T* plane = img + ci * g.h * g.w;
    for (int64_t ky = 0; ky < g.k; ++ky) {
      for (int64_t kx = 0; kx < g.k; ++kx) {
        T* row = col + ((ci * g.k + ky) * g.k + kx) * count;
        int64_t oy = p0 / g.ow, ox = p0 % g.ow;
        for (int64_t j = 0; j < count; ++j) {
          const int64_t iy = oy * g.stride - g.pad + ky;
          const int64_t ix = ox * g.stride - g.pad + kx;
          row[j] = (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w) ? plane[iy * g.w + ix] : T(0);
          if (++ox == g.ow) {
            ox = 0;
            ++oy;
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, int64_t p0, int64_t count, T* img) {
  for (int64_t ci = 0; ci < g.cin; ++ci) {
    T* plane = img + ci * g.h * g.w;
    for (int64_t ky = 0; ky < g.k; ++ky) {
      for (int64_t kx = 0; kx < g.k; ++kx) {
        const T* row = col + ((ci * g.k + ky) * g.k + kx) * count;
        int64_t oy = p0 / g.ow, ox = p0 % g.ow;
        for (int64_t j = 0; j < count; ++j) {
          const int64_t iy = oy * g.stride - g.pad + ky;
          const int64_t ix = ox * g.stride - g.pad + kx;
          if (iy >= 0 && iy < g.h && ix >= 0 && ix < g.w) plane[iy * g.w + ix] += row[j];
          if (++ox == g.ow) {
            ox = 0;
            ++oy;
          }
        }
      }
    }
  }
}

}  // namespace

void set_num_threads(int threads) { Eigen::setNbThreads(std::max(1, threads)); }
int num_threads() { return Eigen::nbThreads(); }

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 int64_t stride, int64_t pad) {
  const ConvGeometry g = conv_geometry(x, weight, stride, pad);
  if (!bias.empty() && bias.numel() != g.cout) {
    throw ConfigError("conv2d: bias has " + std::to_string(bias.numel()) + " entries, expected " +
                      std::to_string(g.cout));
  }
  trace_op("conv2d", g.batch * g.cout * g.out_pixels() * g.patch());
  Tensor<T> y({g.batch, g.cout, g.oh, g.ow});
  ConstMap<T> wmat(weight.data(), g.cout, g.patch());
  const int64_t opix = g.out_pixels();
  std::vector<T> col;
  for (int64_t b = 0; b < g.batch; ++b) {
    const T* img = x.data() + b * g.cin * g.h * g.w;
    T* out = y.data() + b * g.cout * opix;
    if (g.pointwise()) {
      Map<T>(out, g.cout, opix).noalias() = wmat * ConstMap<T>(img, g.cin, opix);
    } else {
      const int64_t tile = g.tile();
      col.resize(static_cast<size_t>(g.patch() * tile));
      for (int64_t p0 = 0; p0 < opix; p0 += tile) {
        const int64_t count = std::min(tile, opix - p0);
        im2col(img, g, p0, count, col.data());
        StridedMap<T>(out + p0, g.cout, count, Eigen::OuterStride<>(opix)).noalias() =
            wmat * ConstMap<T>(col.data(), g.patch(), count);
      }
    }
    if (!bias.empty()) {
      for (int64_t co = 0; co < g.cout; ++co) {
        T* row = out + co * opix;
        const T bv = bias[co];
        for (int64_t p = 0; p < opix; ++p) row[p] += bv;
      }
    }
  }
  return y;
}

template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy,
                     int64_t stride, int64_t pad, Tensor<T>* dx, Tensor<T>& dweight,
                     Tensor<T>& dbias) {
  const ConvGeometry g = conv_geometry(x, weight, stride, pad);
  expect_shape(dy.shape(), {g.batch, g.cout, g.oh, g.ow}, "conv2d_backward dy");
  expect_shape(dweight.shape(), weight.shape(), "conv2d_backward dweight");
  trace_op("conv2d_backward", g.batch * g.cout * g.out_pixels() * g.patch());
  if (dx) {
    if (dx->shape() != x.shape()) *dx = Tensor<T>(x.shape());
  }
  ConstMap<T> wmat(weight.data(), g.cout, g.patch());
  Map<T> dwmat(dweight.data(), g.cout, g.patch());
  const int64_t opix = g.out_pixels();
  std::vector<T> col, dcol;
  for (int64_t b = 0; b < g.batch; ++b) {
    const T* img = x.data() + b * g.cin * g.h * g.w;
    const T* grad = dy.data() + b * g.cout * opix;
    if (!dbias.empty()) {
      for (int64_t co = 0; co < g.cout; ++co) {
        const T* row = grad + co * opix;
        T s = 0;
        for (int64_t p = 0; p < opix; ++p) s += row[p];
        dbias[co] += s;
      }
    }
    if (g.pointwise()) {
      ConstMap<T> gmat(grad, g.cout, opix);
      dwmat.noalias() += gmat * ConstMap<T>(img, g.cin, opix).transpose();
      if (dx) {
        Map<T>(dx->data() + b * g.cin * opix, g.cin, opix).noalias() += wmat.transpose() * gmat;
      }
      continue;
    }
    const int64_t tile = g.tile();
    col.resize(static_cast<size_t>(g.patch() * tile));
    if (dx) dcol.resize(col.size());
    for (int64_t p0 = 0; p0 < opix; p0 += tile) {
      const int64_t count = std::min(tile, opix - p0);
      im2col(img, g, p0, count, col.data());
      ConstStridedMap<T> gtile(grad + p0, g.cout, count, Eigen::OuterStride<>(opix));
      dwmat.noalias() += gtile * ConstMap<T>(col.data(), g.patch(), count).transpose();
      if (dx) {
        Map<T>(dcol.data(), g.patch(), count).noalias() = wmat.transpose() * gtile;
        col2im_add(dcol.data(), g, p0, count, dx->data() + b * g.cin * g.h * g.w);
      }
    }
  }
}

template <typename T>
Tensor<T> channel_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       double eps, ChannelNormCache<T>* cache) {
  if (x.rank() != 4) throw ConfigError("channel_norm: expected NCHW input, got " + shape_str(x.shape()));
  const int64_t B = x.dim(0), C = x.dim(1), P = x.dim(2) * x.dim(3);
  expect_shape(gamma.shape(), {C}, "channel_norm gamma");
  expect_shape(beta.shape(), {C}, "channel_norm beta");
  trace_op("channel_norm", x.numel());
  Tensor<T> y(x.shape());
  if (cache) {
    cache->normalized = Tensor<T>(x.shape());
    cache->rstd.assign(static_cast<size_t>(B * P), T(0));
  }
  std::vector<T> mean(static_cast<size_t>(P)), var(static_cast<size_t>(P));
  for (int64_t b = 0; b < B; ++b) {
    const T* xb = x.data() + b * C * P;
    std::fill(mean.begin(), mean.end(), T(0));
    std::fill(var.begin(), var.end(), T(0));
    for (int64_t c = 0; c < C; ++c) {
      const T* row = xb + c * P;
      for (int64_t p = 0; p < P; ++p) mean[p] += row[p];
    }
    for (auto& m : mean) m /= static_cast<T>(C);
    for (int64_t c = 0; c < C; ++c) {
      const T* row = xb + c * P;
      for (int64_t p = 0; p < P; ++p) {
        const T d = row[p] - mean[p];
        var[p] += d * d;
      }
    }
    for (int64_t p = 0; p < P; ++p) {
      var[p] = T(1) / std::sqrt(var[p] / static_cast<T>(C) + static_cast<T>(eps));
    }
    for (int64_t c = 0; c < C; ++c) {
      const T* row = xb + c * P;
      T* out = y.data() + (b * C + c) * P;
      T* nrm = cache ? cache->normalized.data() + (b * C + c) * P : nullptr;
      const T gc = gamma[c], bc = beta[c];
      for (int64_t p = 0; p < P; ++p) {
        const T n = (row[p] - mean[p]) * var[p];
        if (nrm) nrm[p] = n;
        out[p] = n * gc + bc;
      }
    }
    if (cache) std::copy(var.begin(), var.end(), cache->rstd.begin() + b * P);
  }
  return y;
}

template <typename T>
Tensor<T> channel_norm_backward(const Tensor<T>& dy, const ChannelNormCache<T>& cache,
                                const Tensor<T>& gamma, Tensor<T>& dgamma, Tensor<T>& dbeta) {
  expect_shape(dy.shape(), cache.normalized.shape(), "channel_norm_backward dy");
  const int64_t B = dy.dim(0), C = dy.dim(1), P = dy.dim(2) * dy.dim(3);
  trace_op("channel_norm_backward", dy.numel());
  Tensor<T> dx(dy.shape());
  std::vector<T> sum_g(static_cast<size_t>(P)), sum_gn(static_cast<size_t>(P));
  for (int64_t b = 0; b < B; ++b) {
    std::fill(sum_g.begin(), sum_g.end(), T(0));
    std::fill(sum_gn.begin(), sum_gn.end(), T(0));
    for (int64_t c = 0; c < C; ++c) {
      const T* g = dy.data() + (b * C + c) * P;
      const T* n = cache.normalized.data() + (b * C + c) * P;
      const T gc = gamma[c];
      T dg = 0, db = 0;
      for (int64_t p = 0; p < P; ++p) {
        dg += g[p] * n[p];
        db += g[p];
        const T gh = g[p] * gc;
        sum_g[p] += gh;
        sum_gn[p] += gh * n[p];
      }
      dgamma[c] += dg;
      dbeta[c] += db;
    }
    const T inv_c = T(1) / static_cast<T>(C);
    const T* rstd = cache.rstd.data() + b * P;
    for (int64_t c = 0; c < C; ++c) {
      const T* g = dy.data() + (b * C + c) * P;
      const T* n = cache.normalized.data() + (b * C + c) * P;
      T* out = dx.data() + (b * C + c) * P;
      const T gc = gamma[c];
      for (int64_t p = 0; p < P; ++p) {
        out[p] = rstd[p] * (g[p] * gc - sum_g[p] * inv_c - n[p] * sum_gn[p] * inv_c);
      }
    }
  }
  return dx;
}

template <typename T>
void relu_inplace(Tensor<T>& x) {
  trace_op("relu", x.numel());
  for (auto& v : x.storage()) v = v > T(0) ? v : T(0);
}

template <typename T>
void relu_backward_inplace(Tensor<T>& dy, const Tensor<T>& y) {
  expect_shape(dy.shape(), y.shape(), "relu_backward");
  for (int64_t i = 0; i < dy.numel(); ++i) {
    if (!(y[i] > T(0))) dy[i] = T(0);
  }
}

template <typename T>
void gelu_inplace(Tensor<T>& x) {
  trace_op("gelu", x.numel());
  const T inv_sqrt2 = static_cast<T>(0.70710678118654752440);
  for (auto& v : x.storage()) v = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
}

ResizeAxis resize_axis(int64_t in_size, int64_t out_size) {
  ResizeAxis a;
  a.lo.resize(static_cast<size_t>(out_size));
  a.hi.resize(a.lo.size());
  a.w_lo.resize(a.lo.size());
  a.w_hi.resize(a.lo.size());
  const double scale = static_cast<double>(in_size) / static_cast<double>(out_size);
  for (int64_t o = 0; o < out_size; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    int64_t lo = static_cast<int64_t>(std::floor(src));
    if (lo > in_size - 1) lo = in_size - 1;
    const int64_t hi = std::min(lo + 1, in_size - 1);
    const double lambda = (hi == lo) ? 0.0 : src - static_cast<double>(lo);
    a.lo[o] = lo;
    a.hi[o] = hi;
    a.w_lo[o] = 1.0 - lambda;
    a.w_hi[o] = lambda;
  }
  return a;
}

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, int64_t out_h, int64_t out_w) {
  if (x.rank() != 4) throw ConfigError("resize_bilinear: expected NCHW input, got " + shape_str(x.shape()));
  if (out_h < 1 || out_w < 1) throw ArgumentError("resize_bilinear: output size must be positive");
  const int64_t H = x.dim(2), W = x.dim(3);
  if (H == out_h && W == out_w) return x;
  trace_op("resize_bilinear", x.dim(0) * x.dim(1) * out_h * out_w);
  const ResizeAxis ay = resize_axis(H, out_h), ax = resize_axis(W, out_w);
  Tensor<T> y({x.dim(0), x.dim(1), out_h, out_w});
  const int64_t planes = x.dim(0) * x.dim(1);
  for (int64_t pl = 0; pl < planes; ++pl) {
    const T* in = x.data() + pl * H * W;
    T* out = y.data() + pl * out_h * out_w;
    for (int64_t oy = 0; oy < out_h; ++oy) {
      const T* r0 = in + ay.lo[oy] * W;
      const T* r1 = in + ay.hi[oy] * W;
      const T wy0 = static_cast<T>(ay.w_lo[oy]), wy1 = static_cast<T>(ay.w_hi[oy]);
      for (int64_t ox = 0; ox < out_w; ++ox) {
        const int64_t x0 = ax.lo[ox], x1 = ax.hi[ox];
        const T wx0 = static_cast<T>(ax.w_lo[ox]), wx1 = static_cast<T>(ax.w_hi[ox]);
        out[oy * out_w + ox] = wy0 * (wx0 * r0[x0] + wx1 * r0[x1]) + wy1 * (wx0 * r1[x0] + wx1 * r1[x1]);
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> resize_bilinear_backward(const Tensor<T>& dy, int64_t in_h, int64_t in_w) {
  const int64_t out_h = dy.dim(2), out_w = dy.dim(3);
  if (in_h == out_h && in_w == out_w) return dy;
  trace_op("resize_bilinear_backward", dy.numel());
  const ResizeAxis ay = resize_axis(in_h, out_h), ax = resize_axis(in_w, out_w);
  Tensor<T> dx({dy.dim(0), dy.dim(1), in_h, in_w});
  const int64_t planes = dy.dim(0) * dy.dim(1);
  for (int64_t pl = 0; pl < planes; ++pl) {
    const T* g = dy.data() + pl * out_h * out_w;
    T* out = dx.data() + pl * in_h * in_w;
    for (int64_t oy = 0; oy < out_h; ++oy) {
      T* r0 = out + ay.lo[oy] * in_w;
      T* r1 = out + ay.hi[oy] * in_w;
      const T wy0 = static_cast<T>(ay.w_lo[oy]), wy1 = static_cast<T>(ay.w_hi[oy]);
      for (int64_t ox = 0; ox < out_w; ++ox) {
        const T v = g[oy * out_w + ox];
        const int64_t x0 = ax.lo[ox], x1 = ax.hi[ox];
        const T wx0 = static_cast<T>(ax.w_lo[ox]), wx1 = static_cast<T>(ax.w_hi[ox]);
        r0[x0] += wy0 * wx0 * v;
        r0[x1] += wy0 * wx1 * v;
        r1[x0] += wy1 * wx0 * v;
        r1[x1] += wy1 * wx1 * v;
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> resize_bilinear_nhwc(const Tensor<T>& x, int64_t out_h, int64_t out_w) {
  if (x.rank() != 4) throw ConfigError("resize_bilinear_nhwc: expected rank 4, got " + shape_str(x.shape()));
  const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  if (H == out_h && W == out_w) return x;
  trace_op("resize_bilinear_nhwc", B * out_h * out_w * C);
  const ResizeAxis ay = resize_axis(H, out_h), ax = resize_axis(W, out_w);
  Tensor<T> y({B, out_h, out_w, C});
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t oy = 0; oy < out_h; ++oy) {
      const T wy0 = static_cast<T>(ay.w_lo[oy]), wy1 = static_cast<T>(ay.w_hi[oy]);
      for (int64_t ox = 0; ox < out_w; ++ox) {
        const T wx0 = static_cast<T>(ax.w_lo[ox]), wx1 = static_cast<T>(ax.w_hi[ox]);
        const T* p00 = &x.at(b, ay.lo[oy], ax.lo[ox], 0);
        const T* p01 = &x.at(b, ay.lo[oy], ax.hi[ox], 0);
        const T* p10 = &x.at(b, ay.hi[oy], ax.lo[ox], 0);
        const T* p11 = &x.at(b, ay.hi[oy], ax.hi[ox], 0);
        T* out = &y.at(b, oy, ox, 0);
        for (int64_t c = 0; c < C; ++c) {
          out[c] = wy0 * (wx0 * p00[c] + wx1 * p01[c]) + wy1 * (wx0 * p10[c] + wx1 * p11[c]);
        }
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> nhwc_to_nchw(const Tensor<T>& x) {
  const int64_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  trace_op("permute", x.numel());
  Tensor<T> y({B, C, H, W});
  for (int64_t b = 0; b < B; ++b) {
    ConstMap<T> src(x.data() + b * H * W * C, H * W, C);
    Map<T>(y.data() + b * C * H * W, C, H * W) = src.transpose();
  }
  return y;
}

template <typename T>
Tensor<T> nchw_to_nhwc(const Tensor<T>& x) {
  const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  trace_op("permute", x.numel());
  Tensor<T> y({B, H, W, C});
  for (int64_t b = 0; b < B; ++b) {
    ConstMap<T> src(x.data() + b * C * H * W, C, H * W);
    Map<T>(y.data() + b * H * W * C, H * W, C) = src.transpose();
  }
  return y;
}

template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts) {
  if (parts.empty()) throw ArgumentError("concat_channels: no inputs");
  const Shape& s0 = parts.front()->shape();
  int64_t total_c = 0;
  for (const auto* p : parts) {
    if (p->rank() != 4 || p->dim(0) != s0[0] || p->dim(2) != s0[2] || p->dim(3) != s0[3]) {
      throw ArgumentError("concat_channels: mismatched shapes " + shape_str(s0) + " and " +
                          shape_str(p->shape()));
    }
    total_c += p->dim(1);
  }
  trace_op("concat", s0[0] * total_c * s0[2] * s0[3]);
  const int64_t P = s0[2] * s0[3];
  Tensor<T> y({s0[0], total_c, s0[2], s0[3]});
  for (int64_t b = 0; b < s0[0]; ++b) {
    T* out = y.data() + b * total_c * P;
    for (const auto* p : parts) {
      const int64_t n = p->dim(1) * P;
      std::copy_n(p->data() + b * n, n, out);
      out += n;
    }
  }
  return y;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  const int64_t in = weight.dim(1), out = weight.dim(0);
  if (x.rank() < 1 || x.shape().back() != in) {
    throw ConfigError("linear: input last dim must be " + std::to_string(in) + ", got " +
                      shape_str(x.shape()));
  }
  const int64_t rows = x.numel() / in;
  trace_op("linear", rows * in * out);
  Shape ys = x.shape();
  ys.back() = out;
  Tensor<T> y(ys);
  Map<T> ym(y.data(), rows, out);
  ym.noalias() = ConstMap<T>(x.data(), rows, in) * ConstMap<T>(weight.data(), out, in).transpose();
  if (!bias.empty()) {
    ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(bias.data(), out);
  }
  return y;
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps) {
  const int64_t C = x.shape().back();
  expect_shape(gamma.shape(), {C}, "layer_norm gamma");
  expect_shape(beta.shape(), {C}, "layer_norm beta");
  trace_op("layer_norm", x.numel());
  const int64_t rows = x.numel() / C;
  Tensor<T> y(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const T* in = x.data() + r * C;
    T* out = y.data() + r * C;
    T mean = 0;
    for (int64_t c = 0; c < C; ++c) mean += in[c];
    mean /= static_cast<T>(C);
    T var = 0;
    for (int64_t c = 0; c < C; ++c) var += (in[c] - mean) * (in[c] - mean);
    const T rstd = T(1) / std::sqrt(var / static_cast<T>(C) + static_cast<T>(eps));
    for (int64_t c = 0; c < C; ++c) out[c] = (in[c] - mean) * rstd * gamma[c] + beta[c];
  }
  return y;
}

template <typename T>
void softmax_rows(T* data, int64_t rows, int64_t cols) {
  using Row = Eigen::Array<T, 1, Eigen::Dynamic>;
  for (int64_t r = 0; r < rows; ++r) {
    Eigen::Map<Row> row(data + r * cols, cols);
    row = (row - row.maxCoeff()).exp();
    row *= T(1) / row.sum();
  }
}

#define ROD_INSTANTIATE_KERNELS(T)                                                               \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int64_t,       \
                            int64_t);                                                            \
  template void conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int64_t,   \
                                int64_t, Tensor<T>*, Tensor<T>&, Tensor<T>&);                    \
  template Tensor<T> channel_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double,  \
                                  ChannelNormCache<T>*);                                         \
  template Tensor<T> channel_norm_backward(const Tensor<T>&, const ChannelNormCache<T>&,         \
                                           const Tensor<T>&, Tensor<T>&, Tensor<T>&);            \
  template void relu_inplace(Tensor<T>&);                                                        \
  template void relu_backward_inplace(Tensor<T>&, const Tensor<T>&);                             \
  template void gelu_inplace(Tensor<T>&);                                                        \
  template Tensor<T> resize_bilinear(const Tensor<T>&, int64_t, int64_t);                        \
  template Tensor<T> resize_bilinear_backward(const Tensor<T>&, int64_t, int64_t);               \
  template Tensor<T> resize_bilinear_nhwc(const Tensor<T>&, int64_t, int64_t);                   \
  template Tensor<T> nhwc_to_nchw(const Tensor<T>&);                                             \
  template Tensor<T> nchw_to_nhwc(const Tensor<T>&);                                             \
  template Tensor<T> concat_channels(const std::vector<const Tensor<T>*>&);                      \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);   \
  template void softmax_rows(T*, int64_t, int64_t);

ROD_INSTANTIATE_KERNELS(float)
ROD_INSTANTIATE_KERNELS(double)

}  // namespace rod::kernels
