#pragma once

#include <string>
#include <vector>

#include "sseg/tensor.hpp"

namespace sseg {

// Loss family for the segmentation head. All variants consume per-pixel class
// probabilities y and one-hot targets t in [batch, classes, H, W] layout and
// normalize by N = batch*H*W (pixel count, class sum left unnormalized).
//
//   ce:    -t log y
//   dbce:  ce weighted per pixel by 1/(beta(class) + eps), beta the class
//          pixel frequency of the current mini-batch
//   fce:   (1-y)^gamma focal scaling of ce
//   dbcef: dbce weighting applied to the focal term
enum class LossVariant { ce, dbce, fce, dbcef };

struct LossConfig {
  LossVariant variant = LossVariant::dbcef;
  double epsilon = 1e-4;
  double gamma = 1.0;
};

void validate(const LossConfig& config);

LossVariant loss_variant_from_string(const std::string& name);
std::string to_string(LossVariant v);

// Per-class pixel frequency over the pooled mini-batch: beta(c) =
// (#pixels labeled c) / N. Sums to 1 for one-hot targets.
struct ClassFrequency {
  std::vector<double> beta;
};

template <typename T>
ClassFrequency class_frequency(const TensorT<T>& targets);

// w(c) = 1 / (beta(c) + eps). A class absent from the batch gets 1/eps.
std::vector<double> class_weights(const ClassFrequency& freq, double epsilon);

// Per-pixel-per-class loss terms; zero wherever t == 0. y is clamped to
// [1e-7, 1] before the log.
template <typename T>
TensorT<T> ce_pixel(const TensorT<T>& y, const TensorT<T>& targets);

template <typename T>
TensorT<T> fce_pixel(const TensorT<T>& y, const TensorT<T>& targets, double gamma);

template <typename T>
double loss_ce(const TensorT<T>& y, const TensorT<T>& targets);

template <typename T>
double loss_fce(const TensorT<T>& y, const TensorT<T>& targets, double gamma);

template <typename T>
double loss_dbce(const TensorT<T>& y, const TensorT<T>& targets, double epsilon);

template <typename T>
double loss_dbcef(const TensorT<T>& y, const TensorT<T>& targets, double epsilon, double gamma);

template <typename T>
double loss_forward(const TensorT<T>& y, const TensorT<T>& targets, const LossConfig& config);

// Analytic gradient of the configured loss composed with the channel softmax,
// with respect to the logits. beta is treated as a constant of the batch and
// the clamp as the identity.
template <typename T>
TensorT<T> loss_backward(const TensorT<T>& y, const TensorT<T>& targets,
                         const LossConfig& config);

}  // namespace sseg
