#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "sseg/tensor.hpp"

namespace sseg {

struct IntPair {
  int h = 1;
  int w = 1;
};

// ---------------------------------------------------------------------------
// 2D convolution. input [N, in_ch, H, W], weight [out_ch, in_ch, kh, kw],
// bias [out_ch]. Output spatial size floor((H + 2*pad - kh)/stride) + 1.
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& input, const TensorT<T>& weight,
                          const TensorT<T>& bias, IntPair stride, IntPair padding);

template <typename T>
struct Conv2dGrads {
  TensorT<T> input;
  TensorT<T> weight;
  TensorT<T> bias;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const TensorT<T>& input, const TensorT<T>& weight, IntPair stride,
                               IntPair padding, const TensorT<T>& grad_out);

// ---------------------------------------------------------------------------
// 2x2 stride-2 max pooling. Requires even H and W. Ties route the gradient to
// the first maximal element in row-major block order.
// ---------------------------------------------------------------------------

template <typename T>
struct MaxPool2x2Result {
  TensorT<T> output;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

template <typename T>
MaxPool2x2Result<T> maxpool2x2_forward(const TensorT<T>& input);

template <typename T>
TensorT<T> maxpool2x2_backward(const std::vector<int>& input_shape,
                               const std::vector<std::uint32_t>& argmax,
                               const TensorT<T>& grad_out);

// ---------------------------------------------------------------------------
// 4x4 stride-2 transposed convolution, the adjoint of a 4x4 stride-2 pad-1
// convolution. input [N, in_ch, H, W], weight [in_ch, out_ch, 4, 4],
// bias [out_ch]; output is exactly [N, out_ch, 2H, 2W].
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> tconv4x4s2_forward(const TensorT<T>& input, const TensorT<T>& weight,
                              const TensorT<T>& bias);

template <typename T>
struct TConvGrads {
  TensorT<T> input;
  TensorT<T> weight;
  TensorT<T> bias;
};

template <typename T>
TConvGrads<T> tconv4x4s2_backward(const TensorT<T>& input, const TensorT<T>& weight,
                                  const TensorT<T>& grad_out);

// ---------------------------------------------------------------------------
// ReLU. Subgradient at 0 is taken as 0.
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& input);

template <typename T>
TensorT<T> relu_backward(const TensorT<T>& input, const TensorT<T>& grad_out);

// ---------------------------------------------------------------------------
// Channel concatenation; a occupies the leading channels. An empty (default
// constructed) operand acts as the identity. split_channels is its backward.
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b);

template <typename T>
std::pair<TensorT<T>, TensorT<T>> split_channels(const TensorT<T>& ab, int a_channels);

// ---------------------------------------------------------------------------
// Per-pixel softmax over the channel dimension, computed with the max-shift
// trick so large logits cannot overflow.
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> softmax_channels(const TensorT<T>& logits);

// Gradient w.r.t. logits given the softmax output y and dL/dy.
template <typename T>
TensorT<T> softmax_channels_backward(const TensorT<T>& y, const TensorT<T>& grad_out);

namespace detail {

// Row-major GEMM: C[m,n] = alpha * op(A) * op(B) + beta * C. Dispatches to
// CBLAS when built with SSEG_USE_BLAS, otherwise to gemm_naive.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc);
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc);

// Portable reference path; also serves as the comparison oracle for the BLAS
// route in tests.
template <typename T>
void gemm_naive(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda,
                const T* b, int ldb, T beta, T* c, int ldc);

template <typename T>
void im2col(const T* x, int channels, int height, int width, int kh, int kw, int sh, int sw,
            int ph, int pw, int out_h, int out_w, T* col);

template <typename T>
void col2im(const T* col, int channels, int height, int width, int kh, int kw, int sh, int sw,
            int ph, int pw, int out_h, int out_w, T* x);

}  // namespace detail

}  // namespace sseg
