#include <doctest.h>

#include <cmath>

#include "sseg/gradcheck.hpp"
#include "sseg/layers.hpp"
#include "sseg/rng.hpp"

using namespace sseg;

namespace {

TensorD random4(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  TensorD t(std::move(shape));
  for (auto& v : t) v = rng.uniform_real(lo, hi);
  return t;
}

double dot(const TensorD& a, const TensorD& b) {
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

}  // namespace

TEST_CASE("conv2d matches hand-computed convolutions") {
  // scalar kernel doubles every entry
  const auto x = TensorD::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  const auto w = TensorD::from_data({1, 1, 1, 1}, {2});
  const TensorD b({1}, 0.0);
  const auto out = conv2d_forward(x, w, b, {1, 1}, {0, 0});
  CHECK(out.shape() == std::vector<int>{1, 1, 2, 2});
  CHECK(out[0] == 2.0);
  CHECK(out[1] == 4.0);
  CHECK(out[2] == 6.0);
  CHECK(out[3] == 8.0);

  // identity kernel
  const auto id = TensorD::from_data({1, 1, 1, 1}, {1});
  const auto same = conv2d_forward(x, id, b, {1, 1}, {0, 0});
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(same[i] == x[i]);

  // 3x3 ones, pad 1, all-ones 4x4: corners see 4, edges 6, center 9
  const TensorD ones_in({1, 1, 4, 4}, 1.0);
  const TensorD ones_k({1, 1, 3, 3}, 1.0);
  const auto counted = conv2d_forward(ones_in, ones_k, b, {1, 1}, {1, 1});
  auto at = [&](int r, int c) { return counted[static_cast<std::size_t>(r) * 4 + c]; };
  CHECK(at(0, 0) == 4.0);
  CHECK(at(0, 3) == 4.0);
  CHECK(at(3, 0) == 4.0);
  CHECK(at(3, 3) == 4.0);
  CHECK(at(0, 1) == 6.0);
  CHECK(at(1, 0) == 6.0);
  CHECK(at(1, 1) == 9.0);
  CHECK(at(2, 2) == 9.0);
}

TEST_CASE("conv2d rejects malformed inputs") {
  const TensorD x({1, 2, 4, 4}, 1.0);
  const TensorD w({1, 3, 3, 3}, 1.0);  // channel mismatch
  const TensorD b({1}, 0.0);
  CHECK_THROWS_AS(conv2d_forward(x, w, b, {1, 1}, {1, 1}), Error);

  const TensorD w_big({1, 2, 7, 7}, 1.0);  // kernel larger than padded input
  CHECK_THROWS_AS(conv2d_forward(x, w_big, b, {1, 1}, {1, 1}), Error);

  const TensorD w_ok({1, 2, 3, 3}, 1.0);
  CHECK_THROWS_AS(conv2d_forward(x, w_ok, TensorD({2}, 0.0), {1, 1}, {1, 1}), Error);
}

TEST_CASE("maxpool2x2 pools blocks and routes gradients to the first maximum") {
  const auto x = TensorD::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  const auto pooled = maxpool2x2_forward(x);
  CHECK(pooled.output.shape() == std::vector<int>{1, 1, 1, 1});
  CHECK(pooled.output[0] == 4.0);

  // constant block: tie resolves to the row-major first element
  const TensorD flat({1, 1, 2, 2}, 5.0);
  const auto tied = maxpool2x2_forward(flat);
  CHECK(tied.output[0] == 5.0);
  CHECK(tied.argmax[0] == 0);
  const TensorD gout({1, 1, 1, 1}, 1.0);
  const auto gin = maxpool2x2_backward({1, 1, 2, 2}, tied.argmax, gout);
  CHECK(gin[0] == 1.0);
  CHECK(gin[1] == 0.0);
  CHECK(gin[2] == 0.0);
  CHECK(gin[3] == 0.0);

  // increasing ramp: every block keeps its bottom-right entry
  TensorD ramp({1, 1, 4, 4});
  for (std::size_t i = 0; i < ramp.size(); ++i) ramp[i] = static_cast<double>(i);
  const auto r = maxpool2x2_forward(ramp);
  CHECK(r.output[0] == 5.0);
  CHECK(r.output[1] == 7.0);
  CHECK(r.output[2] == 13.0);
  CHECK(r.output[3] == 15.0);

  CHECK_THROWS_AS(maxpool2x2_forward(TensorD({1, 1, 3, 4}, 0.0)), Error);
}

TEST_CASE("transposed conv places v*k at the origin for a single input pixel") {
  Rng rng(3);
  const double v = 1.75;
  const auto x = TensorD::from_data({1, 1, 1, 1}, {v});
  const auto k = random4({1, 1, 4, 4}, rng);
  const TensorD b({1}, 0.0);
  const auto out = tconv4x4s2_forward(x, k, b);
  CHECK(out.shape() == std::vector<int>{1, 1, 2, 2});
  // output pixel (oh, ow) corresponds to kernel entry (oh+1, ow+1) once the
  // pad-1 border is cropped
  for (int oh = 0; oh < 2; ++oh)
    for (int ow = 0; ow < 2; ++ow)
      CHECK(out[static_cast<std::size_t>(oh) * 2 + ow] ==
            doctest::Approx(v * k[static_cast<std::size_t>(oh + 1) * 4 + (ow + 1)])
                .epsilon(1e-12));

  // zero input broadcasts the bias
  const auto zeros = TensorD({1, 2, 3, 3}, 0.0);
  const auto wk = random4({2, 3, 4, 4}, rng);
  const auto bias = TensorD::from_data({3}, {0.5, -1.0, 2.0});
  const auto bout = tconv4x4s2_forward(zeros, wk, bias);
  CHECK(bout.shape() == std::vector<int>{1, 3, 6, 6});
  for (int c = 0; c < 3; ++c)
    for (int p = 0; p < 36; ++p)
      CHECK(bout[static_cast<std::size_t>(c) * 36 + p] == bias[static_cast<std::size_t>(c)]);

  CHECK_THROWS_AS(tconv4x4s2_forward(zeros, random4({1, 3, 4, 4}, rng), bias), Error);
}

TEST_CASE("stride-2 conv and transposed conv are adjoint with shared weights") {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const int ca = 2, cb = 3;
    const auto x = random4({1, ca, 4, 4}, rng);
    const auto y = random4({1, cb, 2, 2}, rng);
    const auto w = random4({cb, ca, 4, 4}, rng);  // conv [out,in,4,4] == tconv [in,out,4,4]
    const TensorD zb_conv({cb}, 0.0);
    const TensorD zb_tconv({ca}, 0.0);

    const auto conv_x = conv2d_forward(x, w, zb_conv, {2, 2}, {1, 1});
    const auto tconv_y = tconv4x4s2_forward(y, w, zb_tconv);
    CHECK(conv_x.same_shape(y));
    CHECK(tconv_y.same_shape(x));
    CHECK(dot(conv_x, y) == doctest::Approx(dot(x, tconv_y)).epsilon(1e-6));
  }
}

TEST_CASE("relu clamps negatives and uses subgradient 0 at the kink") {
  const auto x = TensorD::from_data({1, 1, 1, 2}, {-1, 2});
  const auto out = relu_forward(x);
  CHECK(out[0] == 0.0);
  CHECK(out[1] == 2.0);

  const TensorD neg({2, 1, 2, 2}, -3.0);
  for (double v : relu_forward(neg)) CHECK(v == 0.0);

  const auto probe = TensorD::from_data({1, 1, 1, 3}, {-2.0, 0.0, 2.0});
  const TensorD g({1, 1, 1, 3}, 1.0);
  const auto gin = relu_backward(probe, g);
  CHECK(gin[0] == 0.0);
  CHECK(gin[1] == 0.0);  // defined as 0 at x == 0
  CHECK(gin[2] == 1.0);
}

TEST_CASE("concat joins channels, treats empty as identity, splits exactly") {
  Rng rng(5);
  const auto a = random4({2, 1, 2, 2}, rng);
  const auto b = random4({2, 1, 2, 2}, rng);
  const auto ab = concat_channels(a, b);
  CHECK(ab.shape() == std::vector<int>{2, 2, 2, 2});

  const TensorD empty;
  const auto same = concat_channels(a, empty);
  CHECK(same.same_shape(a));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(same[i] == a[i]);

  const auto [ra, rb] = split_channels(ab, 1);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(ra[i] == a[i]);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(rb[i] == b[i]);

  CHECK_THROWS_AS(concat_channels(a, random4({2, 1, 3, 2}, rng)), Error);
}

TEST_CASE("softmax is stable, normalized, and matches closed forms") {
  const auto z = TensorD::from_data({1, 2, 1, 1}, {0.0, 0.0});
  const auto y = softmax_channels(z);
  CHECK(y[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(y[1] == doctest::Approx(0.5).epsilon(1e-12));

  const auto huge = TensorD::from_data({1, 2, 1, 1}, {1000.0, 0.0});
  const auto yh = softmax_channels(huge);
  CHECK(std::isfinite(yh[0]));
  CHECK(yh[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(yh[1] == doctest::Approx(0.0).epsilon(1e-12));

  const auto ln3 = TensorD::from_data({1, 2, 1, 1}, {std::log(3.0), 0.0});
  const auto y3 = softmax_channels(ln3);
  CHECK(std::abs(y3[0] - 0.75) < 1e-9);
  CHECK(std::abs(y3[1] - 0.25) < 1e-9);

  Rng rng(23);
  TensorD wild({2, 2, 4, 4});
  for (auto& v : wild) v = rng.uniform_real(-50.0, 50.0);
  const auto yw = softmax_channels(wild);
  for (int n = 0; n < 2; ++n)
    for (int p = 0; p < 16; ++p) {
      const double sum = yw[static_cast<std::size_t>(n) * 32 + p] +
                         yw[static_cast<std::size_t>(n) * 32 + 16 + p];
      CHECK(std::abs(sum - 1.0) < 1e-6);
    }

  TensorD bad({1, 2, 1, 1}, 0.0);
  bad[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(softmax_channels(bad), Error);
}

TEST_CASE("BLAS-backed GEMM agrees with the naive reference") {
  Rng rng(29);
  for (const bool ta : {false, true}) {
    for (const bool tb : {false, true}) {
      const int m = 5, n = 7, k = 3;
      std::vector<double> a(static_cast<std::size_t>(m) * k);
      std::vector<double> b(static_cast<std::size_t>(k) * n);
      for (auto& v : a) v = rng.uniform_real(-1, 1);
      for (auto& v : b) v = rng.uniform_real(-1, 1);
      const int lda = ta ? m : k;
      const int ldb = tb ? k : n;
      std::vector<double> c1(static_cast<std::size_t>(m) * n, 0.5);
      std::vector<double> c2 = c1;
      detail::gemm(ta, tb, m, n, k, 2.0, a.data(), lda, b.data(), ldb, 0.25, c1.data(), n);
      detail::gemm_naive(ta, tb, m, n, k, 2.0, a.data(), lda, b.data(), ldb, 0.25, c2.data(), n);
      for (std::size_t i = 0; i < c1.size(); ++i)
        CHECK(c1[i] == doctest::Approx(c2[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("every layer and loss backward matches finite differences") {
  for (const auto& result : run_gradient_checks()) {
    INFO(result.name, " max_rel_err=", result.max_rel_err);
    CHECK(result.pass);
  }
}

TEST_CASE("the gradient checker flags a perturbed backward") {
  Rng rng(31);
  const auto x = random4({1, 1, 2, 2}, rng);
  auto f = [](const TensorD& probe) {
    double acc = 0;
    for (double v : probe) acc += v * v;
    return acc;
  };
  TensorD analytic(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) analytic[i] = 2.0 * x[i];
  CHECK(check_gradient("sanity/correct", f, x, analytic).pass);

  TensorD wrong = analytic;
  wrong[0] += 1e-2;
  CHECK_FALSE(check_gradient("sanity/perturbed", f, x, wrong).pass);
}
