#include "sseg/gradcheck.hpp"

#include <cmath>

#include "sseg/layers.hpp"
#include "sseg/losses.hpp"
#include "sseg/rng.hpp"

namespace sseg {

namespace {

TensorD random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  TensorD t(std::move(shape));
  for (auto& v : t) v = rng.uniform_real(lo, hi);
  return t;
}

// Values pushed away from zero so ReLU's kink cannot sit inside the
// finite-difference stencil.
TensorD random_tensor_off_kink(std::vector<int> shape, Rng& rng) {
  TensorD t = random_tensor(std::move(shape), rng);
  for (auto& v : t) v += v >= 0.0 ? 0.02 : -0.02;
  return t;
}

TensorD random_onehot(const std::vector<int>& shape, Rng& rng) {
  TensorD t(shape, 0.0);
  const int classes = shape[1];
  const std::size_t plane = static_cast<std::size_t>(shape[2]) * shape[3];
  for (int n = 0; n < shape[0]; ++n) {
    const std::size_t base = static_cast<std::size_t>(n) * classes * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      const auto cls = static_cast<std::size_t>(rng.uniform_int(0, classes - 1));
      t[base + cls * plane + p] = 1.0;
    }
  }
  return t;
}

double project(const TensorD& out, const TensorD& direction) {
  double acc = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) acc += out[i] * direction[i];
  return acc;
}

}  // namespace

GradCheckResult check_gradient(const std::string& name,
                               const std::function<double(const TensorD&)>& f, const TensorD& x,
                               const TensorD& analytic, double tol, double h) {
  const TensorD numeric = finite_diff_grad(f, x, h);
  GradCheckResult result;
  result.name = name;
  result.max_rel_err = max_rel_error(analytic, numeric);
  result.pass = result.max_rel_err <= tol;
  return result;
}

std::vector<GradCheckResult> run_gradient_checks(std::uint64_t seed, double tol) {
  std::vector<GradCheckResult> results;
  Rng rng(seed);

  // --- conv2d, stride 1 and stride 2 ---
  for (const int stride : {1, 2}) {
    const std::string tag = stride == 1 ? "conv2d_s1" : "conv2d_s2";
    const IntPair st{stride, stride}, pad{1, 1};
    const TensorD x = random_tensor({2, 2, 8, 8}, rng);
    const TensorD w = random_tensor({2, 2, 3, 3}, rng);
    const TensorD b = random_tensor({2}, rng);
    const TensorD out = conv2d_forward(x, w, b, st, pad);
    const TensorD dir = random_tensor(out.shape(), rng);
    const Conv2dGrads<double> grads = conv2d_backward(x, w, st, pad, dir);

    results.push_back(check_gradient(
        tag + "/input",
        [&](const TensorD& probe) { return project(conv2d_forward(probe, w, b, st, pad), dir); },
        x, grads.input, tol));
    results.push_back(check_gradient(
        tag + "/weight",
        [&](const TensorD& probe) { return project(conv2d_forward(x, probe, b, st, pad), dir); },
        w, grads.weight, tol));
    results.push_back(check_gradient(
        tag + "/bias",
        [&](const TensorD& probe) { return project(conv2d_forward(x, w, probe, st, pad), dir); },
        b, grads.bias, tol));
  }

  // --- maxpool 2x2 ---
  {
    const TensorD x = random_tensor({2, 2, 8, 8}, rng);
    const auto pooled = maxpool2x2_forward(x);
    const TensorD dir = random_tensor(pooled.output.shape(), rng);
    const TensorD analytic = maxpool2x2_backward(x.shape(), pooled.argmax, dir);
    results.push_back(check_gradient(
        "maxpool2x2/input",
        [&](const TensorD& probe) { return project(maxpool2x2_forward(probe).output, dir); }, x,
        analytic, tol));
  }

  // --- transposed conv 4x4 s2 ---
  {
    const TensorD x = random_tensor({2, 2, 4, 4}, rng);
    const TensorD w = random_tensor({2, 2, 4, 4}, rng);
    const TensorD b = random_tensor({2}, rng);
    const TensorD out = tconv4x4s2_forward(x, w, b);
    const TensorD dir = random_tensor(out.shape(), rng);
    const TConvGrads<double> grads = tconv4x4s2_backward(x, w, dir);

    results.push_back(check_gradient(
        "tconv4x4s2/input",
        [&](const TensorD& probe) { return project(tconv4x4s2_forward(probe, w, b), dir); }, x,
        grads.input, tol));
    results.push_back(check_gradient(
        "tconv4x4s2/weight",
        [&](const TensorD& probe) { return project(tconv4x4s2_forward(x, probe, b), dir); }, w,
        grads.weight, tol));
    results.push_back(check_gradient(
        "tconv4x4s2/bias",
        [&](const TensorD& probe) { return project(tconv4x4s2_forward(x, w, probe), dir); }, b,
        grads.bias, tol));
  }

  // --- relu ---
  {
    const TensorD x = random_tensor_off_kink({2, 2, 8, 8}, rng);
    const TensorD dir = random_tensor(x.shape(), rng);
    results.push_back(check_gradient(
        "relu/input",
        [&](const TensorD& probe) { return project(relu_forward(probe), dir); }, x,
        relu_backward(x, dir), tol));
  }

  // --- softmax over channels ---
  {
    const TensorD z = random_tensor({2, 2, 4, 4}, rng, -4.0, 4.0);
    const TensorD y = softmax_channels(z);
    const TensorD dir = random_tensor(z.shape(), rng);
    results.push_back(check_gradient(
        "softmax/input",
        [&](const TensorD& probe) { return project(softmax_channels(probe), dir); }, z,
        softmax_channels_backward(y, dir), tol));
  }

  // --- concat (both operands) ---
  {
    const TensorD a = random_tensor({2, 1, 4, 4}, rng);
    const TensorD b = random_tensor({2, 2, 4, 4}, rng);
    const TensorD dir = random_tensor({2, 3, 4, 4}, rng);
    const auto halves = split_channels(dir, 1);
    results.push_back(check_gradient(
        "concat/lhs",
        [&](const TensorD& probe) { return project(concat_channels(probe, b), dir); }, a,
        halves.first, tol));
    results.push_back(check_gradient(
        "concat/rhs",
        [&](const TensorD& probe) { return project(concat_channels(a, probe), dir); }, b,
        halves.second, tol));
  }

  // --- losses composed with softmax, eps and gamma as trained ---
  {
    const std::vector<int> shape{2, 2, 4, 4};
    const TensorD z = random_tensor(shape, rng, -4.0, 4.0);
    const TensorD t = random_onehot(shape, rng);
    for (const LossVariant variant :
         {LossVariant::ce, LossVariant::dbce, LossVariant::fce, LossVariant::dbcef}) {
      LossConfig config;
      config.variant = variant;
      config.epsilon = 1e-4;
      config.gamma = 1.0;
      const TensorD analytic = loss_backward(softmax_channels(z), t, config);
      results.push_back(check_gradient(
          "loss_" + to_string(variant) + "/logits",
          [&](const TensorD& probe) {
            return loss_forward(softmax_channels(probe), t, config);
          },
          z, analytic, tol));
    }
  }

  return results;
}

}  // namespace sseg
