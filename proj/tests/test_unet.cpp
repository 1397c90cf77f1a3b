#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "sseg/checkpoint.hpp"
#include "sseg/losses.hpp"
#include "sseg/rng.hpp"
#include "sseg/unet.hpp"

using namespace sseg;

namespace {

TensorT<double> random_input(std::vector<int> shape, Rng& rng) {
  TensorT<double> t(std::move(shape));
  for (auto& v : t) v = rng.uniform_real(0.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("param_count equals hand arithmetic and the constructed set") {
  // levels=1, base=8, in=1, classes=2, maxpool:
  //   enc0.conv1 8*1*9+8    =   80
  //   enc0.conv2 8*8*9+8    =  584
  //   mid.conv1 16*8*9+16   = 1168
  //   mid.conv2 16*16*9+16  = 2320
  //   dec0.up   16*8*16+8   = 2056
  //   dec0.conv1 8*16*9+8   = 1160
  //   dec0.conv2 8*8*9+8    =  584
  //   head       2*8+2      =   18
  UNetConfig small{1, 8, DownsampleMode::MaxPool, 2, 1};
  CHECK(param_count(small) == 7970);
  const auto params = unet_init_params<float>(small, 1);
  CHECK(params.total_scalars() == 7970);

  UNetConfig sconv = small;
  sconv.downsample = DownsampleMode::StridedConv;
  CHECK(param_count(sconv) == 7970 + 584);  // one extra 8->8 3x3 conv
  CHECK(unet_init_params<float>(sconv, 1).total_scalars() == param_count(sconv));

  UNetConfig bad = small;
  bad.levels = 0;
  CHECK_THROWS_AS(param_count(bad), Error);

  // the count/construction identity holds for the default architecture too
  CHECK(unet_init_params<float>(UNetConfig{}, 0).total_scalars() == param_count(UNetConfig{}));
}

TEST_CASE("unet_forward honors the shape contract in both downsample modes") {
  Rng rng(41);
  for (const auto mode : {DownsampleMode::MaxPool, DownsampleMode::StridedConv}) {
    for (int levels = 1; levels <= 4; ++levels) {
      for (const int size : {16, 32, 64}) {
        UNetConfig config{levels, 2, mode, 2, 1};
        const auto params = unet_init_params<double>(config, 9);
        const auto input = random_input({1, 1, size, size}, rng);
        const auto y = unet_forward(config, params, input);
        CHECK(y.shape() == std::vector<int>{1, 2, size, size});
        const std::size_t plane = static_cast<std::size_t>(size) * size;
        for (std::size_t p = 0; p < plane; ++p)
          CHECK(std::abs(y[p] + y[plane + p] - 1.0) < 1e-6);
      }
    }
  }
}

TEST_CASE("identical batch items produce identical outputs") {
  Rng rng(42);
  UNetConfig config{2, 4, DownsampleMode::MaxPool, 2, 1};
  const auto params = unet_init_params<double>(config, 3);
  const auto one = random_input({1, 1, 16, 16}, rng);
  TensorT<double> two({2, 1, 16, 16});
  for (std::size_t i = 0; i < one.size(); ++i) {
    two[i] = one[i];
    two[one.size() + i] = one[i];
  }
  const auto y = unet_forward(config, params, two);
  const std::size_t half = y.size() / 2;
  for (std::size_t i = 0; i < half; ++i) CHECK(y[i] == y[half + i]);
}

TEST_CASE("unet_forward validates input dims and parameter sets") {
  UNetConfig config{2, 4, DownsampleMode::MaxPool, 2, 1};
  const auto params = unet_init_params<double>(config, 3);
  CHECK_THROWS_AS(unet_forward(config, params, TensorT<double>({1, 1, 18, 16}, 0.0)), Error);

  UNetConfig other = config;
  other.base_channels = 8;
  const auto wrong = unet_init_params<double>(other, 3);
  CHECK_THROWS_AS(unet_forward(config, wrong, TensorT<double>({1, 1, 16, 16}, 0.0)), Error);
}

TEST_CASE("weight init is deterministic per seed") {
  UNetConfig config{2, 4, DownsampleMode::MaxPool, 2, 1};
  const auto a = unet_init_params<float>(config, 77);
  const auto b = unet_init_params<float>(config, 77);
  const auto c = unet_init_params<float>(config, 78);
  REQUIRE(a.count() == b.count());
  bool any_diff = false;
  for (std::size_t i = 0; i < a.count(); ++i) {
    const auto& ta = a.item(i).value;
    const auto& tb = b.item(i).value;
    const auto& tc = c.item(i).value;
    for (std::size_t k = 0; k < ta.size(); ++k) {
      CHECK(ta[k] == tb[k]);
      any_diff |= ta[k] != tc[k];
    }
  }
  CHECK(any_diff);

  // bounds follow the fan-in/fan-out rule; biases start at zero
  const auto& w = a.at("enc0.conv1.weight");
  const double limit = std::sqrt(6.0 / (1 * 9 + 4 * 9));
  for (float v : w) CHECK(std::abs(v) <= limit);
  for (float v : a.at("enc0.conv1.bias")) CHECK(v == 0.0f);
}

TEST_CASE("whole-network gradients match finite differences on probed weights") {
  Rng rng(55);
  UNetConfig config{1, 2, DownsampleMode::MaxPool, 2, 1};
  auto params = unet_init_params<double>(config, 5);
  const auto input = random_input({1, 1, 4, 4}, rng);

  TensorT<double> targets({1, 2, 4, 4}, 0.0);
  for (int p = 0; p < 16; ++p) {
    const auto cls = static_cast<std::size_t>(rng.uniform_int(0, 1));
    targets[cls * 16 + static_cast<std::size_t>(p)] = 1.0;
  }
  LossConfig loss_config;  // dbcef, eps 1e-4, gamma 1

  auto loss_of = [&](const ParameterSetT<double>& probe) {
    return loss_forward(unet_forward(config, probe, input), targets, loss_config);
  };

  UNetContext<double> ctx;
  const auto probs = unet_forward(config, params, input, &ctx);
  const auto grad_logits = loss_backward(probs, targets, loss_config);
  const auto grads = unet_backward(config, params, ctx, grad_logits);

  const double h = 1e-6;
  for (std::size_t item = 0; item < params.count(); ++item) {
    // probe two coordinates of every parameter tensor
    for (const std::size_t k : {std::size_t{0}, params.item(item).value.size() / 2}) {
      const double saved = params.item(item).value[k];
      params.item(item).value[k] = saved + h;
      const double up = loss_of(params);
      params.item(item).value[k] = saved - h;
      const double down = loss_of(params);
      params.item(item).value[k] = saved;
      const double numeric = (up - down) / (2 * h);
      const double analytic = grads.item(item).value[k];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
      INFO(params.item(item).name, "[", k, "] numeric=", numeric, " analytic=", analytic);
      CHECK(std::abs(numeric - analytic) / denom < 1e-4);
    }
  }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  UNetConfig config{2, 4, DownsampleMode::StridedConv, 2, 1};
  const auto params = unet_init_params<float>(config, 123);
  const auto dir = std::filesystem::temp_directory_path() / "sseg_ckpt_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "model.sseg").string();

  save_checkpoint(path, config, params);
  const Checkpoint loaded = load_checkpoint(path);
  CHECK(loaded.config.levels == config.levels);
  CHECK(loaded.config.base_channels == config.base_channels);
  CHECK(loaded.config.downsample == config.downsample);
  CHECK(loaded.config.num_classes == config.num_classes);
  CHECK(loaded.config.in_channels == config.in_channels);
  REQUIRE(loaded.params.count() == params.count());
  for (std::size_t i = 0; i < params.count(); ++i) {
    CHECK(loaded.params.item(i).name == params.item(i).name);
    const auto& a = params.item(i).value;
    const auto& b = loaded.params.item(i).value;
    REQUIRE(a.same_shape(b));
    for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k] == b[k]);
  }

  // resaving the loaded set reproduces identical bytes
  const std::string path2 = (dir / "model2.sseg").string();
  save_checkpoint(path2, loaded.config, loaded.params);
  CHECK(fnv1a64_file(path) == fnv1a64_file(path2));

  // corrupt magic
  {
    std::FILE* f = std::fopen(path.c_str(), "r+b");
    REQUIRE(f);
    std::fputc('X', f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  CHECK_THROWS_AS(load_checkpoint((dir / "missing.sseg").string()), Error);
  std::filesystem::remove_all(dir);
}
