#include "sseg/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace sseg {

template <typename T>
TensorT<T> reduce_sum(const TensorT<T>& a, std::span<const int> axes) {
  const int rank = a.rank();
  std::vector<bool> reduced(static_cast<std::size_t>(rank), false);
  for (int ax : axes) {
    if (ax < 0 || ax >= rank)
      throw shape_error("reduce_sum axis " + std::to_string(ax) + " out of range for rank " +
                        std::to_string(rank));
    if (reduced[static_cast<std::size_t>(ax)])
      throw shape_error("reduce_sum axis " + std::to_string(ax) + " listed twice");
    reduced[static_cast<std::size_t>(ax)] = true;
  }

  std::vector<int> out_shape;
  for (int i = 0; i < rank; ++i)
    if (!reduced[static_cast<std::size_t>(i)]) out_shape.push_back(a.dim(i));
  // Reducing every axis collapses to a single-element tensor.
  if (out_shape.empty()) out_shape.push_back(1);

  TensorT<T> out(out_shape, T(0));

  // Row-major strides of the input and of the kept axes within the output.
  std::vector<std::size_t> in_stride(static_cast<std::size_t>(rank), 1);
  for (int i = rank - 2; i >= 0; --i)
    in_stride[static_cast<std::size_t>(i)] =
        in_stride[static_cast<std::size_t>(i + 1)] * static_cast<std::size_t>(a.dim(i + 1));

  std::vector<std::size_t> out_stride_for_axis(static_cast<std::size_t>(rank), 0);
  std::size_t running = 1;
  for (int i = rank - 1; i >= 0; --i) {
    if (!reduced[static_cast<std::size_t>(i)]) {
      out_stride_for_axis[static_cast<std::size_t>(i)] = running;
      running *= static_cast<std::size_t>(a.dim(i));
    }
  }

  std::vector<int> idx(static_cast<std::size_t>(rank), 0);
  const T* src = a.data();
  T* dst = out.data();
  const std::size_t n = a.size();
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t out_flat = 0;
    for (int i = 0; i < rank; ++i)
      out_flat += static_cast<std::size_t>(idx[static_cast<std::size_t>(i)]) *
                  out_stride_for_axis[static_cast<std::size_t>(i)];
    dst[out_flat] += src[flat];
    for (int i = rank - 1; i >= 0; --i) {
      if (++idx[static_cast<std::size_t>(i)] < a.dim(i)) break;
      idx[static_cast<std::size_t>(i)] = 0;
    }
  }
  return out;
}

TensorD finite_diff_grad(const std::function<double(const TensorD&)>& f, const TensorD& x,
                         double h) {
  if (!(h > 0)) throw numeric_error("finite_diff_grad requires h > 0");
  TensorD grad(x.shape());
  TensorD probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    probe[i] = xi + h;
    const double fp = f(probe);
    probe[i] = xi - h;
    const double fm = f(probe);
    probe[i] = xi;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw numeric_error("finite_diff_grad: non-finite function value at coordinate " +
                          std::to_string(i));
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

double max_rel_error(const TensorD& a, const TensorD& b) {
  if (!a.same_shape(b)) throw shape_error("max_rel_error shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = std::max({std::abs(a[i]), std::abs(b[i]), 1e-8});
    worst = std::max(worst, std::abs(a[i] - b[i]) / denom);
  }
  return worst;
}

template class TensorT<float>;
template class TensorT<double>;
template TensorT<float> reduce_sum(const TensorT<float>&, std::span<const int>);
template TensorT<double> reduce_sum(const TensorT<double>&, std::span<const int>);

}  // namespace sseg
