#include "sseg/losses.hpp"

#include <algorithm>
#include <cmath>

namespace sseg {

namespace {

constexpr double kProbFloor = 1e-7;
constexpr double kProbTolerance = 1e-5;

template <typename T>
void validate_pair(const TensorT<T>& y, const TensorT<T>& targets) {
  if (y.rank() != 4) throw shape_error("loss input must be [batch, classes, H, W]");
  if (!y.same_shape(targets))
    throw shape_error("loss shape mismatch: y " + shape_string(y) + " vs t " +
                      shape_string(targets));
}

template <typename T>
void validate_onehot(const TensorT<T>& targets) {
  const int classes = targets.dim(1);
  const std::size_t plane =
      static_cast<std::size_t>(targets.dim(2)) * static_cast<std::size_t>(targets.dim(3));
  const T* t = targets.data();
  for (int n = 0; n < targets.dim(0); ++n) {
    const std::size_t base = static_cast<std::size_t>(n) * classes * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      T sum = 0;
      for (int c = 0; c < classes; ++c) {
        const T v = t[base + static_cast<std::size_t>(c) * plane + p];
        if (v != T(0) && v != T(1)) throw numeric_error("targets must be one-hot {0,1}");
        sum += v;
      }
      if (sum != T(1)) throw numeric_error("targets must have exactly one class per pixel");
    }
  }
}

template <typename T>
double clamp_prob(T y) {
  const double v = static_cast<double>(y);
  if (v < -kProbTolerance || v > 1.0 + kProbTolerance)
    throw numeric_error("probability outside [0,1]: " + std::to_string(v));
  return std::min(1.0, std::max(kProbFloor, v));
}

// -t log y, with the focal (1-y)^gamma scaling when gamma > 0. gamma == 0
// takes the plain cross-entropy branch so the reduction is bit-exact.
template <typename T>
double pixel_term(T y, double gamma) {
  const double yc = clamp_prob(y);
  const double ce = -std::log(yc);
  if (gamma == 0.0) return ce;
  const double u = 1.0 - yc;
  const double factor = gamma == 1.0 ? u : std::pow(u, gamma);
  return factor * ce;
}

// (1/N) sum over pixels of w(class) * term(y_at_true_class); weights may be
// empty for the unweighted variants.
template <typename T>
double weighted_mean(const TensorT<T>& y, const TensorT<T>& targets,
                     const std::vector<double>& weights, double gamma) {
  const int batch = y.dim(0), classes = y.dim(1);
  const std::size_t plane = static_cast<std::size_t>(y.dim(2)) * y.dim(3);
  const std::size_t pixels = static_cast<std::size_t>(batch) * plane;
  const T* py = y.data();
  const T* pt = targets.data();
  double total = 0.0;
  for (int n = 0; n < batch; ++n) {
    const std::size_t base = static_cast<std::size_t>(n) * classes * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      for (int c = 0; c < classes; ++c) {
        const std::size_t i = base + static_cast<std::size_t>(c) * plane + p;
        if (pt[i] == T(0)) continue;
        const double w = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(c)];
        total += w * pixel_term(py[i], gamma);
      }
    }
  }
  return total / static_cast<double>(pixels);
}

}  // namespace

void validate(const LossConfig& config) {
  if (!(config.epsilon > 0)) throw config_error("loss epsilon must be > 0");
  if (!(config.gamma >= 0)) throw config_error("loss gamma must be >= 0");
}

LossVariant loss_variant_from_string(const std::string& name) {
  if (name == "ce") return LossVariant::ce;
  if (name == "dbce") return LossVariant::dbce;
  if (name == "fce") return LossVariant::fce;
  if (name == "dbcef") return LossVariant::dbcef;
  throw config_error("unknown loss variant: " + name + " (expected ce|dbce|fce|dbcef)");
}

std::string to_string(LossVariant v) {
  switch (v) {
    case LossVariant::ce: return "ce";
    case LossVariant::dbce: return "dbce";
    case LossVariant::fce: return "fce";
    case LossVariant::dbcef: return "dbcef";
  }
  return "?";
}

template <typename T>
ClassFrequency class_frequency(const TensorT<T>& targets) {
  if (targets.rank() != 4) throw shape_error("targets must be [batch, classes, H, W]");
  validate_onehot(targets);
  const int batch = targets.dim(0), classes = targets.dim(1);
  const std::size_t plane = static_cast<std::size_t>(targets.dim(2)) * targets.dim(3);
  const std::size_t pixels = static_cast<std::size_t>(batch) * plane;

  ClassFrequency freq;
  freq.beta.assign(static_cast<std::size_t>(classes), 0.0);
  std::vector<std::size_t> counts(static_cast<std::size_t>(classes), 0);
  const T* t = targets.data();
  for (int n = 0; n < batch; ++n) {
    const std::size_t base = static_cast<std::size_t>(n) * classes * plane;
    for (int c = 0; c < classes; ++c) {
      const T* row = t + base + static_cast<std::size_t>(c) * plane;
      std::size_t acc = 0;
      for (std::size_t p = 0; p < plane; ++p) acc += (row[p] == T(1));
      counts[static_cast<std::size_t>(c)] += acc;
    }
  }
  for (int c = 0; c < classes; ++c)
    freq.beta[static_cast<std::size_t>(c)] =
        static_cast<double>(counts[static_cast<std::size_t>(c)]) / static_cast<double>(pixels);
  return freq;
}

std::vector<double> class_weights(const ClassFrequency& freq, double epsilon) {
  if (!(epsilon > 0)) throw config_error("loss epsilon must be > 0");
  std::vector<double> w(freq.beta.size());
  for (std::size_t c = 0; c < w.size(); ++c) w[c] = 1.0 / (freq.beta[c] + epsilon);
  return w;
}

template <typename T>
TensorT<T> ce_pixel(const TensorT<T>& y, const TensorT<T>& targets) {
  validate_pair(y, targets);
  TensorT<T> out(y.shape(), T(0));
  const T* py = y.data();
  const T* pt = targets.data();
  for (std::size_t i = 0; i < y.size(); ++i)
    if (pt[i] != T(0)) out[i] = static_cast<T>(pixel_term(py[i], 0.0));
  return out;
}

template <typename T>
TensorT<T> fce_pixel(const TensorT<T>& y, const TensorT<T>& targets, double gamma) {
  validate_pair(y, targets);
  if (!(gamma >= 0)) throw config_error("fce gamma must be >= 0");
  TensorT<T> out(y.shape(), T(0));
  const T* py = y.data();
  const T* pt = targets.data();
  for (std::size_t i = 0; i < y.size(); ++i)
    if (pt[i] != T(0)) out[i] = static_cast<T>(pixel_term(py[i], gamma));
  return out;
}

template <typename T>
double loss_ce(const TensorT<T>& y, const TensorT<T>& targets) {
  validate_pair(y, targets);
  validate_onehot(targets);
  return weighted_mean(y, targets, {}, 0.0);
}

template <typename T>
double loss_fce(const TensorT<T>& y, const TensorT<T>& targets, double gamma) {
  validate_pair(y, targets);
  validate_onehot(targets);
  if (!(gamma >= 0)) throw config_error("fce gamma must be >= 0");
  return weighted_mean(y, targets, {}, gamma);
}

template <typename T>
double loss_dbce(const TensorT<T>& y, const TensorT<T>& targets, double epsilon) {
  validate_pair(y, targets);
  const auto weights = class_weights(class_frequency(targets), epsilon);
  return weighted_mean(y, targets, weights, 0.0);
}

template <typename T>
double loss_dbcef(const TensorT<T>& y, const TensorT<T>& targets, double epsilon, double gamma) {
  validate_pair(y, targets);
  if (!(gamma >= 0)) throw config_error("dbcef gamma must be >= 0");
  const auto weights = class_weights(class_frequency(targets), epsilon);
  return weighted_mean(y, targets, weights, gamma);
}

template <typename T>
double loss_forward(const TensorT<T>& y, const TensorT<T>& targets, const LossConfig& config) {
  validate(config);
  switch (config.variant) {
    case LossVariant::ce: return loss_ce(y, targets);
    case LossVariant::fce: return loss_fce(y, targets, config.gamma);
    case LossVariant::dbce: return loss_dbce(y, targets, config.epsilon);
    case LossVariant::dbcef: return loss_dbcef(y, targets, config.epsilon, config.gamma);
  }
  throw config_error("unknown loss variant");
}

template <typename T>
TensorT<T> loss_backward(const TensorT<T>& y, const TensorT<T>& targets,
                         const LossConfig& config) {
  validate(config);
  validate_pair(y, targets);
  validate_onehot(targets);

  const bool balanced =
      config.variant == LossVariant::dbce || config.variant == LossVariant::dbcef;
  const bool focal = (config.variant == LossVariant::fce || config.variant == LossVariant::dbcef) &&
                     config.gamma > 0.0;
  std::vector<double> weights;
  if (balanced) weights = class_weights(class_frequency(targets), config.epsilon);

  const int batch = y.dim(0), classes = y.dim(1);
  const std::size_t plane = static_cast<std::size_t>(y.dim(2)) * y.dim(3);
  const double inv_pixels = 1.0 / (static_cast<double>(batch) * static_cast<double>(plane));
  const double gamma = config.gamma;

  TensorT<T> grad(y.shape());
  const T* py = y.data();
  const T* pt = targets.data();
  T* pg = grad.data();

  for (int n = 0; n < batch; ++n) {
    const std::size_t base = static_cast<std::size_t>(n) * classes * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      int true_class = -1;
      for (int c = 0; c < classes; ++c)
        if (pt[base + static_cast<std::size_t>(c) * plane + p] == T(1)) {
          true_class = c;
          break;
        }
      const std::size_t ik = base + static_cast<std::size_t>(true_class) * plane + p;
      const double yk = static_cast<double>(py[ik]);
      const double yc = clamp_prob(py[ik]);
      const double w = balanced ? weights[static_cast<std::size_t>(true_class)] : 1.0;

      // dpsi = d/dy of the pixel term at the true class.
      double dpsi;
      if (!focal) {
        dpsi = -1.0 / yc;
      } else {
        const double u = 1.0 - yc;
        if (u <= 0.0) {
          dpsi = 0.0;  // limit of the focal term as y -> 1
        } else {
          const double u_gm1 = gamma == 1.0 ? 1.0 : std::pow(u, gamma - 1.0);
          dpsi = gamma * u_gm1 * std::log(yc) - u_gm1 * u / yc;
        }
      }

      // Chain through the softmax: dz_j = w * dpsi * y_k * (delta_jk - y_j) / N.
      const double common = w * dpsi * yk * inv_pixels;
      for (int c = 0; c < classes; ++c) {
        const std::size_t i = base + static_cast<std::size_t>(c) * plane + p;
        const double delta = (c == true_class) ? 1.0 : 0.0;
        pg[i] = static_cast<T>(common * (delta - static_cast<double>(py[i])));
      }
    }
  }
  return grad;
}

#define SSEG_INSTANTIATE_LOSSES(T)                                                       \
  template ClassFrequency class_frequency(const TensorT<T>&);                           \
  template TensorT<T> ce_pixel(const TensorT<T>&, const TensorT<T>&);                   \
  template TensorT<T> fce_pixel(const TensorT<T>&, const TensorT<T>&, double);          \
  template double loss_ce(const TensorT<T>&, const TensorT<T>&);                        \
  template double loss_fce(const TensorT<T>&, const TensorT<T>&, double);               \
  template double loss_dbce(const TensorT<T>&, const TensorT<T>&, double);              \
  template double loss_dbcef(const TensorT<T>&, const TensorT<T>&, double, double);     \
  template double loss_forward(const TensorT<T>&, const TensorT<T>&, const LossConfig&); \
  template TensorT<T> loss_backward(const TensorT<T>&, const TensorT<T>&, const LossConfig&);

SSEG_INSTANTIATE_LOSSES(float)
SSEG_INSTANTIATE_LOSSES(double)

#undef SSEG_INSTANTIATE_LOSSES

}  // namespace sseg
