#include <doctest.h>

#include <cmath>
#include <numeric>

#include "sseg/rng.hpp"
#include "sseg/tensor.hpp"

using namespace sseg;

TEST_CASE("tensor construction fills and validates shapes") {
  TensorD zeros({2, 2}, 0.0);
  CHECK(zeros.size() == 4);
  for (double v : zeros) CHECK(v == 0.0);

  TensorD filled({1, 2, 3, 4}, 1.5);
  CHECK(filled.size() == 24);
  for (double v : filled) CHECK(v == 1.5);

  CHECK_THROWS_AS(TensorD({2, 0}), Error);
  CHECK_THROWS_AS(TensorD({-1, 3}), Error);
  CHECK_THROWS_AS(TensorD(std::vector<int>{}), Error);
  CHECK_THROWS_AS(TensorD::from_data({2, 2}, {1.0, 2.0, 3.0}), Error);
}

TEST_CASE("elementwise applies f pairwise and rejects shape mismatches") {
  const auto a = TensorD::from_data({2}, {1.0, 2.0});
  const auto b = TensorD::from_data({2}, {3.0, 4.0});
  const auto sum = elementwise(a, b, [](double x, double y) { return x + y; });
  CHECK(sum[0] == 4.0);
  CHECK(sum[1] == 6.0);

  const TensorD zero({2}, 0.0);
  const auto same = elementwise(a, zero, [](double x, double y) { return x + y; });
  CHECK(same[0] == a[0]);
  CHECK(same[1] == a[1]);

  const auto c = TensorD::from_data({2}, {2.0, 3.0});
  const auto d = TensorD::from_data({2}, {4.0, 5.0});
  const auto prod = elementwise(c, d, [](double x, double y) { return x * y; });
  CHECK(prod[0] == 8.0);
  CHECK(prod[1] == 15.0);

  const TensorD e({3}, 0.0);
  CHECK_THROWS_AS(elementwise(a, e, [](double x, double y) { return x + y; }), Error);
}

TEST_CASE("elementwise add/multiply commute and associate within 1e-12") {
  Rng rng(7);
  auto random = [&] {
    TensorD t({3, 4});
    for (auto& v : t) v = rng.uniform_real(-2.0, 2.0);
    return t;
  };
  const TensorD a = random(), b = random(), c = random();
  auto add = [](double x, double y) { return x + y; };
  auto mul = [](double x, double y) { return x * y; };

  for (auto op : {+0, +1}) {
    auto f = op == 0 ? add : mul;
    const auto ab_c = elementwise(elementwise(a, b, f), c, f);
    const auto cb_a = elementwise(elementwise(c, b, f), a, f);
    const auto ba_c = elementwise(elementwise(b, a, f), c, f);
    for (std::size_t i = 0; i < ab_c.size(); ++i) {
      CHECK(ab_c[i] == doctest::Approx(cb_a[i]).epsilon(1e-12));
      CHECK(ab_c[i] == doctest::Approx(ba_c[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("reduce_sum collapses the requested axes") {
  const auto m = TensorD::from_data({2, 2}, {1.0, 2.0, 3.0, 4.0});

  const int ax0[] = {0};
  const auto rows = reduce_sum(m, std::span<const int>(ax0, 1));
  CHECK(rows.shape() == std::vector<int>{2});
  CHECK(rows[0] == 4.0);
  CHECK(rows[1] == 6.0);

  const int ax1[] = {1};
  const auto cols = reduce_sum(m, std::span<const int>(ax1, 1));
  CHECK(cols[0] == 3.0);
  CHECK(cols[1] == 7.0);

  const int both[] = {0, 1};
  const auto total = reduce_sum(m, std::span<const int>(both, 2));
  CHECK(total.shape() == std::vector<int>{1});
  CHECK(total[0] == 10.0);

  const int bad[] = {2};
  CHECK_THROWS_AS(reduce_sum(m, std::span<const int>(bad, 1)), Error);
  const int dup[] = {0, 0};
  CHECK_THROWS_AS(reduce_sum(m, std::span<const int>(dup, 2)), Error);
}

TEST_CASE("reduce_sum preserves totals and ignores axis order") {
  Rng rng(11);
  TensorD t({2, 3, 4});
  for (auto& v : t) v = rng.uniform_real(-1.0, 1.0);
  const double direct = std::accumulate(t.begin(), t.end(), 0.0);

  const int order_a[] = {0, 2};
  const int order_b[] = {2, 0};
  const auto ra = reduce_sum(t, std::span<const int>(order_a, 2));
  const auto rb = reduce_sum(t, std::span<const int>(order_b, 2));
  CHECK(ra.shape() == rb.shape());
  for (std::size_t i = 0; i < ra.size(); ++i) CHECK(ra[i] == rb[i]);

  const double after = std::accumulate(ra.begin(), ra.end(), 0.0);
  CHECK(after == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("finite_diff_grad recovers closed-form derivatives") {
  auto sum_squares = [](const TensorD& x) {
    double acc = 0;
    for (double v : x) acc += v * v;
    return acc;
  };
  const auto x = TensorD::from_data({1}, {3.0});
  const auto g = finite_diff_grad(sum_squares, x, 1e-5);
  CHECK(std::abs(g[0] - 6.0) < 1e-6);

  auto constant = [](const TensorD&) { return 42.0; };
  const TensorD x2({4}, 0.7);
  const auto gz = finite_diff_grad(constant, x2, 1e-5);
  for (double v : gz) CHECK(std::abs(v) < 1e-9);

  const auto w = TensorD::from_data({3}, {2.0, -1.0, 0.5});
  auto linear = [&](const TensorD& probe) {
    double acc = 0;
    for (std::size_t i = 0; i < probe.size(); ++i) acc += w[i] * probe[i];
    return acc;
  };
  TensorD x3({3}, 0.25);
  const auto gl = finite_diff_grad(linear, x3, 1e-5);
  for (std::size_t i = 0; i < gl.size(); ++i) CHECK(std::abs(gl[i] - w[i]) < 1e-6);

  auto bad = [](const TensorD& probe) { return std::log(probe[0]); };
  const auto neg = TensorD::from_data({1}, {-1.0});
  CHECK_THROWS_AS(finite_diff_grad(bad, neg, 1e-5), Error);
  CHECK_THROWS_AS(finite_diff_grad(linear, x3, 0.0), Error);
}

TEST_CASE("max_rel_error uses the guarded relative metric") {
  const auto a = TensorD::from_data({2}, {1.0, 0.0});
  const auto b = TensorD::from_data({2}, {1.0 + 1e-6, 0.0});
  CHECK(max_rel_error(a, b) == doctest::Approx(1e-6).epsilon(1e-3));
  CHECK(max_rel_error(a, a) == 0.0);
}
