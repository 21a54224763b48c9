#pragma once

#include <cstdint>
#include <vector>

#include "rod/tensor.hpp"

// Dense kernels shared by the encoder and decoder. Feature maps are NCHW,
// token grids are (B, g, g, C) and are treated as (B*g*g, C) row matrices by
// the token kernels. Backward functions accumulate into their gradient outputs.
namespace rod::kernels {

// Sets the number of threads used by the matrix-product backend.
void set_num_threads(int threads);
int num_threads();

// ---- convolution ----------------------------------------------------------

// x: (B, Cin, H, W); weight: (Cout, Cin, k, k); bias: (Cout) or empty.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 int64_t stride, int64_t pad);

// dx may be null when the input gradient is not needed.
template <typename T>
void conv2d_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& dy,
                     int64_t stride, int64_t pad, Tensor<T>* dx, Tensor<T>& dweight,
                     Tensor<T>& dbias);

// ---- channel layer norm (LayerNorm2d) ---------------------------------------

template <typename T>
struct ChannelNormCache {
  Tensor<T> normalized;     // (x - mean) * rstd, same shape as x
  std::vector<T> rstd;      // one per (b, y, x) pixel
};

template <typename T>
Tensor<T> channel_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       double eps, ChannelNormCache<T>* cache);

template <typename T>
Tensor<T> channel_norm_backward(const Tensor<T>& dy, const ChannelNormCache<T>& cache,
                                const Tensor<T>& gamma, Tensor<T>& dgamma, Tensor<T>& dbeta);

// ---- elementwise -----------------------------------------------------------

template <typename T>
void relu_inplace(Tensor<T>& x);

// Zeroes dy wherever the forward output was not positive.
template <typename T>
void relu_backward_inplace(Tensor<T>& dy, const Tensor<T>& y);

template <typename T>
void gelu_inplace(Tensor<T>& x);

// ---- bilinear resize -------------------------------------------------------
// Half-pixel centres, no corner alignment, source coordinate clamped at the
// borders. Equal sizes copy the input unchanged.

struct ResizeAxis {
  std::vector<int64_t> lo, hi;
  std::vector<double> w_lo, w_hi;
};
ResizeAxis resize_axis(int64_t in_size, int64_t out_size);

template <typename T>
Tensor<T> resize_bilinear(const Tensor<T>& x, int64_t out_h, int64_t out_w);

template <typename T>
Tensor<T> resize_bilinear_backward(const Tensor<T>& dy, int64_t in_h, int64_t in_w);

// Same interpolation on a channels-last (B, H, W, C) tensor.
template <typename T>
Tensor<T> resize_bilinear_nhwc(const Tensor<T>& x, int64_t out_h, int64_t out_w);

// ---- layout ----------------------------------------------------------------

template <typename T>
Tensor<T> nhwc_to_nchw(const Tensor<T>& x);

template <typename T>
Tensor<T> nchw_to_nhwc(const Tensor<T>& x);

// Concatenates equally-shaped NCHW tensors along channels.
template <typename T>
Tensor<T> concat_channels(const std::vector<const Tensor<T>*>& parts);

// ---- token kernels ---------------------------------------------------------

// x: (..., in) ; weight: (out, in) ; bias: (out). Returns (..., out).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// LayerNorm over the last dimension.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     double eps);

// Softmax over each row of a row-major (rows, cols) buffer, in place.
template <typename T>
void softmax_rows(T* data, int64_t rows, int64_t cols);

}  // namespace rod::kernels
