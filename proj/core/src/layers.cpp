#include "sseg/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "sseg/parallel.hpp"

#ifdef SSEG_USE_BLAS
#include <cblas.h>

#include <mutex>

// Present in OpenBLAS; weak so other CBLAS providers still link.
extern "C" void openblas_set_num_threads(int) __attribute__((weak));
#endif

namespace sseg {

namespace detail {

#ifdef SSEG_USE_BLAS
namespace {

// Parallelism lives at the batch level in this library; the BLAS itself runs
// sequentially so a fixed --threads value pins the result bits.
void pin_blas_threads() {
  static std::once_flag flag;
  std::call_once(flag, [] {
    if (openblas_set_num_threads) openblas_set_num_threads(1);
  });
}

}  // namespace
#endif

template <typename T>
void gemm_naive(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda,
                const T* b, int ldb, T beta, T* c, int ldc) {
  auto at = [&](int i, int j) { return trans_a ? a[j * lda + i] : a[i * lda + j]; };
  auto bt = [&](int i, int j) { return trans_b ? b[j * ldb + i] : b[i * ldb + j]; };
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      T acc = 0;
      for (int p = 0; p < k; ++p) acc += at(i, p) * bt(p, j);
      c[i * ldc + j] = alpha * acc + (beta == T(0) ? T(0) : beta * c[i * ldc + j]);
    }
  }
}

template void gemm_naive(bool, bool, int, int, int, float, const float*, int, const float*, int,
                         float, float*, int);
template void gemm_naive(bool, bool, int, int, int, double, const double*, int, const double*,
                         int, double, double*, int);

#ifdef SSEG_USE_BLAS
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
  pin_blas_threads();
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
  pin_blas_threads();
  cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
              trans_b ? CblasTrans : CblasNoTrans, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
#else
void gemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
          const float* b, int ldb, float beta, float* c, int ldc) {
  gemm_naive(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
void gemm(bool trans_a, bool trans_b, int m, int n, int k, double alpha, const double* a, int lda,
          const double* b, int ldb, double beta, double* c, int ldc) {
  gemm_naive(trans_a, trans_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
#endif

// col[(c*kh+i)*kw+j, oh*out_w+ow] = x[c, oh*sh+i-ph, ow*sw+j-pw], zero outside.
template <typename T>
void im2col(const T* x, int channels, int height, int width, int kh, int kw, int sh, int sw,
            int ph, int pw, int out_h, int out_w, T* col) {
  const int plane = out_h * out_w;
  for (int c = 0; c < channels; ++c) {
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        T* dst = col + ((c * kh + i) * kw + j) * plane;
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * sh + i - ph;
          if (ih < 0 || ih >= height) {
            std::fill(dst, dst + out_w, T(0));
            dst += out_w;
            continue;
          }
          const T* src_row = x + (c * height + ih) * width;
          for (int ow = 0; ow < out_w; ++ow) {
            const int iw = ow * sw + j - pw;
            *dst++ = (iw >= 0 && iw < width) ? src_row[iw] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds col entries back into x (x must be zeroed).
template <typename T>
void col2im(const T* col, int channels, int height, int width, int kh, int kw, int sh, int sw,
            int ph, int pw, int out_h, int out_w, T* x) {
  const int plane = out_h * out_w;
  for (int c = 0; c < channels; ++c) {
    for (int i = 0; i < kh; ++i) {
      for (int j = 0; j < kw; ++j) {
        const T* src = col + ((c * kh + i) * kw + j) * plane;
        for (int oh = 0; oh < out_h; ++oh) {
          const int ih = oh * sh + i - ph;
          if (ih < 0 || ih >= height) {
            src += out_w;
            continue;
          }
          T* dst_row = x + (c * height + ih) * width;
          for (int ow = 0; ow < out_w; ++ow) {
            const int iw = ow * sw + j - pw;
            if (iw >= 0 && iw < width) dst_row[iw] += src[ow];
          }
          src += out_w;
        }
      }
    }
  }
}

template void im2col(const float*, int, int, int, int, int, int, int, int, int, int, int, float*);
template void im2col(const double*, int, int, int, int, int, int, int, int, int, int, int,
                     double*);
template void col2im(const float*, int, int, int, int, int, int, int, int, int, int, int, float*);
template void col2im(const double*, int, int, int, int, int, int, int, int, int, int, int,
                     double*);

}  // namespace detail

namespace {

template <typename T>
void require_nchw(const TensorT<T>& t, const char* what) {
  if (t.rank() != 4) throw shape_error(std::string(what) + " must be rank 4, got " + shape_string(t));
}

}  // namespace

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

template <typename T>
static void conv2d_validate(const TensorT<T>& input, const TensorT<T>& weight,
                            const TensorT<T>* bias, IntPair stride, IntPair padding, int& out_h,
                            int& out_w) {
  require_nchw(input, "conv2d input");
  require_nchw(weight, "conv2d weight");
  const int in_ch = input.dim(1);
  if (weight.dim(1) != in_ch)
    throw shape_error("conv2d channel mismatch: input has " + std::to_string(in_ch) +
                      " channels, weight expects " + std::to_string(weight.dim(1)));
  if (bias && (bias->rank() != 1 || bias->dim(0) != weight.dim(0)))
    throw shape_error("conv2d bias must be [out_channels]");
  if (stride.h < 1 || stride.w < 1 || padding.h < 0 || padding.w < 0)
    throw shape_error("conv2d stride must be >= 1 and padding >= 0");
  const int kh = weight.dim(2), kw = weight.dim(3);
  const int padded_h = input.dim(2) + 2 * padding.h;
  const int padded_w = input.dim(3) + 2 * padding.w;
  if (kh > padded_h || kw > padded_w)
    throw shape_error("conv2d kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                      " larger than padded input " + std::to_string(padded_h) + "x" +
                      std::to_string(padded_w));
  out_h = (padded_h - kh) / stride.h + 1;
  out_w = (padded_w - kw) / stride.w + 1;
}

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& input, const TensorT<T>& weight,
                          const TensorT<T>& bias, IntPair stride, IntPair padding) {
  int out_h = 0, out_w = 0;
  conv2d_validate(input, weight, &bias, stride, padding, out_h, out_w);
  const int batch = input.dim(0), in_ch = input.dim(1), height = input.dim(2),
            width = input.dim(3);
  const int out_ch = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  const int kcol = in_ch * kh * kw;
  const int plane = out_h * out_w;

  TensorT<T> out({batch, out_ch, out_h, out_w});
  const std::size_t in_stride = static_cast<std::size_t>(in_ch) * height * width;
  const std::size_t out_stride = static_cast<std::size_t>(out_ch) * plane;

  parallel_for_chunks(static_cast<std::size_t>(batch), [&](int, std::size_t begin,
                                                           std::size_t end) {
    std::vector<T> col(static_cast<std::size_t>(kcol) * plane);
    for (std::size_t n = begin; n < end; ++n) {
      detail::im2col(input.data() + n * in_stride, in_ch, height, width, kh, kw, stride.h,
                     stride.w, padding.h, padding.w, out_h, out_w, col.data());
      T* dst = out.data() + n * out_stride;
      detail::gemm(false, false, out_ch, plane, kcol, T(1), weight.data(), kcol, col.data(),
                   plane, T(0), dst, plane);
      for (int co = 0; co < out_ch; ++co) {
        const T b = bias[static_cast<std::size_t>(co)];
        T* row = dst + static_cast<std::size_t>(co) * plane;
        for (int p = 0; p < plane; ++p) row[p] += b;
      }
    }
  });
  return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const TensorT<T>& input, const TensorT<T>& weight, IntPair stride,
                               IntPair padding, const TensorT<T>& grad_out) {
  int out_h = 0, out_w = 0;
  conv2d_validate(input, weight, static_cast<const TensorT<T>*>(nullptr), stride, padding, out_h, out_w);
  require_nchw(grad_out, "conv2d grad_out");
  const int batch = input.dim(0), in_ch = input.dim(1), height = input.dim(2),
            width = input.dim(3);
  const int out_ch = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (grad_out.dim(0) != batch || grad_out.dim(1) != out_ch || grad_out.dim(2) != out_h ||
      grad_out.dim(3) != out_w)
    throw shape_error("conv2d grad_out shape mismatch: " + shape_string(grad_out));

  const int kcol = in_ch * kh * kw;
  const int plane = out_h * out_w;
  const std::size_t in_stride = static_cast<std::size_t>(in_ch) * height * width;
  const std::size_t out_stride = static_cast<std::size_t>(out_ch) * plane;

  Conv2dGrads<T> grads{TensorT<T>(input.shape()), TensorT<T>(weight.shape()),
                       TensorT<T>({out_ch})};

  const int workers = plan_workers(static_cast<std::size_t>(batch));
  std::vector<std::vector<T>> dw_parts(static_cast<std::size_t>(workers),
                                       std::vector<T>(weight.size(), T(0)));
  std::vector<std::vector<T>> db_parts(static_cast<std::size_t>(workers),
                                       std::vector<T>(static_cast<std::size_t>(out_ch), T(0)));

  parallel_for_chunks(static_cast<std::size_t>(batch), [&](int worker, std::size_t begin,
                                                           std::size_t end) {
    std::vector<T> col(static_cast<std::size_t>(kcol) * plane);
    std::vector<T> dcol(static_cast<std::size_t>(kcol) * plane);
    T* dw = dw_parts[static_cast<std::size_t>(worker)].data();
    T* db = db_parts[static_cast<std::size_t>(worker)].data();
    for (std::size_t n = begin; n < end; ++n) {
      const T* gout = grad_out.data() + n * out_stride;

      // dW += gout x col^T, accumulated per worker and reduced in order below.
      detail::im2col(input.data() + n * in_stride, in_ch, height, width, kh, kw, stride.h,
                     stride.w, padding.h, padding.w, out_h, out_w, col.data());
      detail::gemm(false, true, out_ch, kcol, plane, T(1), gout, plane, col.data(), plane, T(1),
                   dw, kcol);

      for (int co = 0; co < out_ch; ++co) {
        const T* row = gout + static_cast<std::size_t>(co) * plane;
        T acc = 0;
        for (int p = 0; p < plane; ++p) acc += row[p];
        db[co] += acc;
      }

      // dX = col2im(W^T x gout)
      detail::gemm(true, false, kcol, plane, out_ch, T(1), weight.data(), kcol, gout, plane, T(0),
                   dcol.data(), plane);
      detail::col2im(dcol.data(), in_ch, height, width, kh, kw, stride.h, stride.w, padding.h,
                     padding.w, out_h, out_w, grads.input.data() + n * in_stride);
    }
  });

  for (int w = 0; w < workers; ++w) {
    const auto& dw = dw_parts[static_cast<std::size_t>(w)];
    const auto& db = db_parts[static_cast<std::size_t>(w)];
    for (std::size_t i = 0; i < grads.weight.size(); ++i) grads.weight[i] += dw[i];
    for (std::size_t i = 0; i < grads.bias.size(); ++i) grads.bias[i] += db[i];
  }
  return grads;
}

// ---------------------------------------------------------------------------
// maxpool 2x2
// ---------------------------------------------------------------------------

template <typename T>
MaxPool2x2Result<T> maxpool2x2_forward(const TensorT<T>& input) {
  require_nchw(input, "maxpool input");
  const int batch = input.dim(0), ch = input.dim(1), height = input.dim(2), width = input.dim(3);
  if (height % 2 != 0 || width % 2 != 0)
    throw shape_error("maxpool2x2 requires even spatial dims, got " + shape_string(input));

  const int out_h = height / 2, out_w = width / 2;
  MaxPool2x2Result<T> result{TensorT<T>({batch, ch, out_h, out_w}), {}};
  result.argmax.resize(result.output.size());

  const T* src = input.data();
  T* dst = result.output.data();
  std::uint32_t* amax = result.argmax.data();
  std::size_t o = 0;
  for (int n = 0; n < batch; ++n) {
    for (int c = 0; c < ch; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * ch + c) *
                               static_cast<std::size_t>(height) * width;
      for (int oh = 0; oh < out_h; ++oh) {
        for (int ow = 0; ow < out_w; ++ow) {
          const std::size_t i00 = base + static_cast<std::size_t>(2 * oh) * width + 2 * ow;
          // Row-major block order; strict > keeps the first maximum on ties.
          std::size_t best = i00;
          T val = src[i00];
          const std::size_t cand[3] = {i00 + 1, i00 + static_cast<std::size_t>(width),
                                       i00 + static_cast<std::size_t>(width) + 1};
          for (std::size_t idx : cand) {
            if (src[idx] > val) {
              val = src[idx];
              best = idx;
            }
          }
          dst[o] = val;
          amax[o] = static_cast<std::uint32_t>(best);
          ++o;
        }
      }
    }
  }
  return result;
}

template <typename T>
TensorT<T> maxpool2x2_backward(const std::vector<int>& input_shape,
                               const std::vector<std::uint32_t>& argmax,
                               const TensorT<T>& grad_out) {
  TensorT<T> grad_in(input_shape, T(0));
  if (argmax.size() != grad_out.size())
    throw shape_error("maxpool backward: argmax/grad_out size mismatch");
  for (std::size_t i = 0; i < argmax.size(); ++i) grad_in[argmax[i]] += grad_out[i];
  return grad_in;
}

// ---------------------------------------------------------------------------
// transposed conv 4x4 stride 2
// ---------------------------------------------------------------------------

template <typename T>
static void tconv_validate(const TensorT<T>& input, const TensorT<T>& weight,
                           const TensorT<T>* bias) {
  require_nchw(input, "tconv input");
  require_nchw(weight, "tconv weight");
  if (weight.dim(2) != 4 || weight.dim(3) != 4)
    throw shape_error("tconv weight must be [in_ch, out_ch, 4, 4], got " + shape_string(weight));
  if (weight.dim(0) != input.dim(1))
    throw shape_error("tconv channel mismatch: input has " + std::to_string(input.dim(1)) +
                      " channels, weight expects " + std::to_string(weight.dim(0)));
  if (bias && (bias->rank() != 1 || bias->dim(0) != weight.dim(1)))
    throw shape_error("tconv bias must be [out_channels]");
}

template <typename T>
TensorT<T> tconv4x4s2_forward(const TensorT<T>& input, const TensorT<T>& weight,
                              const TensorT<T>& bias) {
  tconv_validate(input, weight, &bias);
  const int batch = input.dim(0), in_ch = input.dim(1), height = input.dim(2),
            width = input.dim(3);
  const int out_ch = weight.dim(1);
  const int out_h = 2 * height, out_w = 2 * width;
  const int kcol = out_ch * 16;
  const int plane = height * width;

  TensorT<T> out({batch, out_ch, out_h, out_w});
  const std::size_t in_stride = static_cast<std::size_t>(in_ch) * plane;
  const std::size_t out_stride = static_cast<std::size_t>(out_ch) * out_h * out_w;

  parallel_for_chunks(static_cast<std::size_t>(batch), [&](int, std::size_t begin,
                                                           std::size_t end) {
    std::vector<T> col(static_cast<std::size_t>(kcol) * plane);
    for (std::size_t n = begin; n < end; ++n) {
      // col = W^T x, then scatter through the adjoint of the stride-2 pad-1
      // im2col over the output grid.
      detail::gemm(true, false, kcol, plane, in_ch, T(1), weight.data(), kcol,
                   input.data() + n * in_stride, plane, T(0), col.data(), plane);
      T* dst = out.data() + n * out_stride;
      std::fill(dst, dst + out_stride, T(0));
      detail::col2im(col.data(), out_ch, out_h, out_w, 4, 4, 2, 2, 1, 1, height, width, dst);
      for (int co = 0; co < out_ch; ++co) {
        const T b = bias[static_cast<std::size_t>(co)];
        T* row = dst + static_cast<std::size_t>(co) * out_h * out_w;
        for (int p = 0; p < out_h * out_w; ++p) row[p] += b;
      }
    }
  });
  return out;
}

template <typename T>
TConvGrads<T> tconv4x4s2_backward(const TensorT<T>& input, const TensorT<T>& weight,
                                  const TensorT<T>& grad_out) {
  tconv_validate(input, weight, static_cast<const TensorT<T>*>(nullptr));
  require_nchw(grad_out, "tconv grad_out");
  const int batch = input.dim(0), in_ch = input.dim(1), height = input.dim(2),
            width = input.dim(3);
  const int out_ch = weight.dim(1);
  const int out_h = 2 * height, out_w = 2 * width;
  if (grad_out.dim(0) != batch || grad_out.dim(1) != out_ch || grad_out.dim(2) != out_h ||
      grad_out.dim(3) != out_w)
    throw shape_error("tconv grad_out shape mismatch: " + shape_string(grad_out));

  const int kcol = out_ch * 16;
  const int plane = height * width;
  const std::size_t in_stride = static_cast<std::size_t>(in_ch) * plane;
  const std::size_t out_stride = static_cast<std::size_t>(out_ch) * out_h * out_w;

  TConvGrads<T> grads{TensorT<T>(input.shape()), TensorT<T>(weight.shape()),
                      TensorT<T>({out_ch})};

  const int workers = plan_workers(static_cast<std::size_t>(batch));
  std::vector<std::vector<T>> dw_parts(static_cast<std::size_t>(workers),
                                       std::vector<T>(weight.size(), T(0)));
  std::vector<std::vector<T>> db_parts(static_cast<std::size_t>(workers),
                                       std::vector<T>(static_cast<std::size_t>(out_ch), T(0)));

  parallel_for_chunks(static_cast<std::size_t>(batch), [&](int worker, std::size_t begin,
                                                           std::size_t end) {
    std::vector<T> colg(static_cast<std::size_t>(kcol) * plane);
    T* dw = dw_parts[static_cast<std::size_t>(worker)].data();
    T* db = db_parts[static_cast<std::size_t>(worker)].data();
    for (std::size_t n = begin; n < end; ++n) {
      const T* gout = grad_out.data() + n * out_stride;
      // colg gathers grad_out exactly as the forward scattered it.
      detail::im2col(gout, out_ch, out_h, out_w, 4, 4, 2, 2, 1, 1, height, width, colg.data());

      // dX = W colg
      detail::gemm(false, false, in_ch, plane, kcol, T(1), weight.data(), kcol, colg.data(),
                   plane, T(0), grads.input.data() + n * in_stride, plane);

      // dW += x colg^T
      detail::gemm(false, true, in_ch, kcol, plane, T(1), input.data() + n * in_stride, plane,
                   colg.data(), plane, T(1), dw, kcol);

      for (int co = 0; co < out_ch; ++co) {
        const T* row = gout + static_cast<std::size_t>(co) * out_h * out_w;
        T acc = 0;
        for (int p = 0; p < out_h * out_w; ++p) acc += row[p];
        db[co] += acc;
      }
    }
  });

  for (int w = 0; w < workers; ++w) {
    const auto& dw = dw_parts[static_cast<std::size_t>(w)];
    const auto& db = db_parts[static_cast<std::size_t>(w)];
    for (std::size_t i = 0; i < grads.weight.size(); ++i) grads.weight[i] += dw[i];
    for (std::size_t i = 0; i < grads.bias.size(); ++i) grads.bias[i] += db[i];
  }
  return grads;
}

// ---------------------------------------------------------------------------
// relu / concat / softmax
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> relu_forward(const TensorT<T>& input) {
  TensorT<T> out(input.shape());
  const T* src = input.data();
  T* dst = out.data();
  for (std::size_t i = 0; i < input.size(); ++i) dst[i] = src[i] > T(0) ? src[i] : T(0);
  return out;
}

template <typename T>
TensorT<T> relu_backward(const TensorT<T>& input, const TensorT<T>& grad_out) {
  if (!input.same_shape(grad_out)) throw shape_error("relu backward shape mismatch");
  TensorT<T> grad_in(input.shape());
  const T* x = input.data();
  const T* g = grad_out.data();
  T* dst = grad_in.data();
  for (std::size_t i = 0; i < input.size(); ++i) dst[i] = x[i] > T(0) ? g[i] : T(0);
  return grad_in;
}

template <typename T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
  if (a.empty()) return b;
  if (b.empty()) return a;
  require_nchw(a, "concat lhs");
  require_nchw(b, "concat rhs");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
    throw shape_error("concat spatial/batch mismatch: " + shape_string(a) + " vs " +
                      shape_string(b));
  const int batch = a.dim(0), ca = a.dim(1), cb = b.dim(1), height = a.dim(2), width = a.dim(3);
  TensorT<T> out({batch, ca + cb, height, width});
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  for (int n = 0; n < batch; ++n) {
    T* dst = out.data() + static_cast<std::size_t>(n) * (ca + cb) * plane;
    std::memcpy(dst, a.data() + static_cast<std::size_t>(n) * ca * plane,
                sizeof(T) * ca * plane);
    std::memcpy(dst + static_cast<std::size_t>(ca) * plane,
                b.data() + static_cast<std::size_t>(n) * cb * plane, sizeof(T) * cb * plane);
  }
  return out;
}

template <typename T>
std::pair<TensorT<T>, TensorT<T>> split_channels(const TensorT<T>& ab, int a_channels) {
  require_nchw(ab, "split input");
  const int batch = ab.dim(0), ch = ab.dim(1), height = ab.dim(2), width = ab.dim(3);
  if (a_channels <= 0 || a_channels >= ch)
    throw shape_error("split_channels: invalid leading channel count " +
                      std::to_string(a_channels));
  const int cb = ch - a_channels;
  TensorT<T> a({batch, a_channels, height, width});
  TensorT<T> b({batch, cb, height, width});
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  for (int n = 0; n < batch; ++n) {
    const T* src = ab.data() + static_cast<std::size_t>(n) * ch * plane;
    std::memcpy(a.data() + static_cast<std::size_t>(n) * a_channels * plane, src,
                sizeof(T) * a_channels * plane);
    std::memcpy(b.data() + static_cast<std::size_t>(n) * cb * plane,
                src + static_cast<std::size_t>(a_channels) * plane, sizeof(T) * cb * plane);
  }
  return {std::move(a), std::move(b)};
}

template <typename T>
TensorT<T> softmax_channels(const TensorT<T>& logits) {
  require_nchw(logits, "softmax logits");
  if (!all_finite(logits)) throw numeric_error("softmax: non-finite logits");
  const int batch = logits.dim(0), ch = logits.dim(1), height = logits.dim(2),
            width = logits.dim(3);
  TensorT<T> out(logits.shape());
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  const T* src = logits.data();
  T* dst = out.data();
  for (int n = 0; n < batch; ++n) {
    const std::size_t base = static_cast<std::size_t>(n) * ch * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      T m = src[base + p];
      for (int c = 1; c < ch; ++c)
        m = std::max(m, src[base + static_cast<std::size_t>(c) * plane + p]);
      T denom = 0;
      for (int c = 0; c < ch; ++c) {
        const T e = std::exp(src[base + static_cast<std::size_t>(c) * plane + p] - m);
        dst[base + static_cast<std::size_t>(c) * plane + p] = e;
        denom += e;
      }
      const T inv = T(1) / denom;
      for (int c = 0; c < ch; ++c) dst[base + static_cast<std::size_t>(c) * plane + p] *= inv;
    }
  }
  return out;
}

template <typename T>
TensorT<T> softmax_channels_backward(const TensorT<T>& y, const TensorT<T>& grad_out) {
  if (!y.same_shape(grad_out)) throw shape_error("softmax backward shape mismatch");
  const int batch = y.dim(0), ch = y.dim(1), height = y.dim(2), width = y.dim(3);
  TensorT<T> grad_in(y.shape());
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  const T* py = y.data();
  const T* pg = grad_out.data();
  T* dst = grad_in.data();
  for (int n = 0; n < batch; ++n) {
    const std::size_t base = static_cast<std::size_t>(n) * ch * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      T dot = 0;
      for (int c = 0; c < ch; ++c) {
        const std::size_t i = base + static_cast<std::size_t>(c) * plane + p;
        dot += pg[i] * py[i];
      }
      for (int c = 0; c < ch; ++c) {
        const std::size_t i = base + static_cast<std::size_t>(c) * plane + p;
        dst[i] = py[i] * (pg[i] - dot);
      }
    }
  }
  return grad_in;
}

#define SSEG_INSTANTIATE_LAYERS(T)                                                              \
  template TensorT<T> conv2d_forward(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&,  \
                                     IntPair, IntPair);                                        \
  template Conv2dGrads<T> conv2d_backward(const TensorT<T>&, const TensorT<T>&, IntPair,       \
                                          IntPair, const TensorT<T>&);                         \
  template MaxPool2x2Result<T> maxpool2x2_forward(const TensorT<T>&);                          \
  template TensorT<T> maxpool2x2_backward(const std::vector<int>&,                             \
                                          const std::vector<std::uint32_t>&,                   \
                                          const TensorT<T>&);                                  \
  template TensorT<T> tconv4x4s2_forward(const TensorT<T>&, const TensorT<T>&,                 \
                                         const TensorT<T>&);                                   \
  template TConvGrads<T> tconv4x4s2_backward(const TensorT<T>&, const TensorT<T>&,             \
                                             const TensorT<T>&);                               \
  template TensorT<T> relu_forward(const TensorT<T>&);                                         \
  template TensorT<T> relu_backward(const TensorT<T>&, const TensorT<T>&);                     \
  template TensorT<T> concat_channels(const TensorT<T>&, const TensorT<T>&);                   \
  template std::pair<TensorT<T>, TensorT<T>> split_channels(const TensorT<T>&, int);           \
  template TensorT<T> softmax_channels(const TensorT<T>&);                                     \
  template TensorT<T> softmax_channels_backward(const TensorT<T>&, const TensorT<T>&);

SSEG_INSTANTIATE_LAYERS(float)
SSEG_INSTANTIATE_LAYERS(double)

#undef SSEG_INSTANTIATE_LAYERS

}  // namespace sseg
