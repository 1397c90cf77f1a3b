#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "sseg/error.hpp"

namespace sseg {

// Dense N-dimensional array in row-major layout. Batched activations use the
// [batch, channel, height, width] convention throughout the library.
// Precision is carried by the scalar type: Tensor (float) is the standard
// training precision, TensorD (double) the high precision used by the
// gradient-check suites.
template <typename T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(std::vector<int> shape, T fill = T(0))
      : shape_(std::move(shape)), data_(checked_size(shape_), fill) {}

  static TensorT from_data(std::vector<int> shape, std::vector<T> data) {
    TensorT t(std::move(shape));
    if (t.data_.size() != data.size())
      throw shape_error("tensor data length " + std::to_string(data.size()) +
                        " does not match shape product " + std::to_string(t.data_.size()));
    t.data_ = std::move(data);
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Checked N-d access; hot loops index flat via data() instead.
  T& at(std::initializer_list<int> idx) { return data_[flat_index(idx)]; }
  const T& at(std::initializer_list<int> idx) const { return data_[flat_index(idx)]; }

  bool same_shape(const TensorT& other) const { return shape_ == other.shape_; }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  static std::size_t checked_size(const std::vector<int>& shape) {
    if (shape.empty()) throw shape_error("tensor shape must have at least one dimension");
    std::size_t n = 1;
    for (int d : shape) {
      if (d <= 0)
        throw shape_error("tensor dimension must be positive, got " + std::to_string(d));
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  std::size_t flat_index(std::initializer_list<int> idx) const {
    if (idx.size() != shape_.size()) throw shape_error("index rank mismatch");
    std::size_t flat = 0;
    std::size_t k = 0;
    for (int i : idx) {
      const int d = shape_[k];
      if (i < 0 || i >= d) throw shape_error("index out of bounds");
      flat = flat * static_cast<std::size_t>(d) + static_cast<std::size_t>(i);
      ++k;
    }
    return flat;
  }

  std::vector<int> shape_;
  std::vector<T> data_;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

template <typename T>
std::string shape_string(const TensorT<T>& t) {
  std::string s = "[";
  for (int i = 0; i < t.rank(); ++i) {
    if (i) s += ",";
    s += std::to_string(t.dim(i));
  }
  return s + "]";
}

// out[i] = f(a[i], b[i]) over tensors of identical shape.
template <typename T, typename F>
TensorT<T> elementwise(const TensorT<T>& a, const TensorT<T>& b, F&& f) {
  if (!a.same_shape(b))
    throw shape_error("elementwise shape mismatch: " + shape_string(a) + " vs " + shape_string(b));
  TensorT<T> out(a.shape());
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) po[i] = f(pa[i], pb[i]);
  return out;
}

template <typename T>
TensorT<T> reduce_sum(const TensorT<T>& a, std::span<const int> axes);

template <typename T>
bool all_finite(const TensorT<T>& t) {
  for (const T v : t)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

// Central finite differences, (f(x+h e_i) - f(x-h e_i)) / 2h per coordinate.
// The oracle every analytic backward in the library is validated against;
// runs in high precision only.
TensorD finite_diff_grad(const std::function<double(const TensorD&)>& f, const TensorD& x,
                         double h = 1e-5);

// max_i |a_i - b_i| / max(|a_i|, |b_i|, 1e-8)
double max_rel_error(const TensorD& a, const TensorD& b);

extern template class TensorT<float>;
extern template class TensorT<double>;
extern template TensorT<float> reduce_sum(const TensorT<float>&, std::span<const int>);
extern template TensorT<double> reduce_sum(const TensorT<double>&, std::span<const int>);

}  // namespace sseg
