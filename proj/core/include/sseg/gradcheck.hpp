#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sseg/tensor.hpp"

namespace sseg {

struct GradCheckResult {
  std::string name;
  double max_rel_err = 0.0;
  bool pass = false;
};

// Compares an analytic gradient against central finite differences of f at x
// (high precision), using the relative metric from tensor.hpp.
GradCheckResult check_gradient(const std::string& name,
                               const std::function<double(const TensorD&)>& f, const TensorD& x,
                               const TensorD& analytic, double tol = 1e-4, double h = 1e-5);

// The full verification suite: every layer backward (conv stride 1 and 2,
// maxpool, transposed conv, relu, softmax, concat, including weight and bias
// gradients) and every loss variant (ce, dbce, fce, dbcef at eps=1e-4,
// gamma=1) against finite differences on small random inputs.
std::vector<GradCheckResult> run_gradient_checks(std::uint64_t seed = 20240901,
                                                 double tol = 1e-4);

}  // namespace sseg
