#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "fixtures.hpp"
#include "sseg/optim.hpp"

using namespace sseg;

TEST_CASE("lr_at follows the step-decay schedule") {
  AdamConfig config;  // lr0 2e-4, decay 0.8 every 30 epochs
  CHECK(lr_at(0, config) == doctest::Approx(2e-4).epsilon(1e-12));
  CHECK(lr_at(29, config) == doctest::Approx(2e-4).epsilon(1e-12));
  CHECK(lr_at(30, config) == doctest::Approx(1.6e-4).epsilon(1e-12));
  CHECK(lr_at(59, config) == doctest::Approx(1.6e-4).epsilon(1e-12));
  CHECK(lr_at(60, config) == doctest::Approx(1.28e-4).epsilon(1e-12));
  CHECK_THROWS_AS(lr_at(-1, config), Error);

  // non-increasing, piecewise constant with breaks at multiples of decay_every
  double prev = lr_at(0, config);
  for (int e = 1; e < 120; ++e) {
    const double lr = lr_at(e, config);
    CHECK(lr <= prev);
    if (e % config.decay_every != 0) CHECK(lr == lr_at(e - 1, config));
    prev = lr;
  }
}

namespace {

ParameterSet scalar_params(float value) {
  ParameterSet p;
  p.add("w", Tensor({1}, value));
  return p;
}

ParameterSet scalar_grads(float g) {
  ParameterSet p;
  p.add("w", Tensor({1}, g));
  return p;
}

}  // namespace

TEST_CASE("adam_step zero gradient leaves parameters unchanged from a fresh state") {
  AdamConfig config;
  auto params = scalar_params(1.25f);
  AdamState state;
  adam_step(params, scalar_grads(0.0f), state, lr_at(0, config), config);
  CHECK(params.at("w")[0] == 1.25f);
  // and stays unchanged for any number of zero-gradient steps
  for (int i = 0; i < 5; ++i) adam_step(params, scalar_grads(0.0f), state, 1e-3, config);
  CHECK(params.at("w")[0] == 1.25f);
}

TEST_CASE("first adam step moves by about lr in the gradient direction") {
  AdamConfig config;
  for (const float g : {0.3f, -2.0f, 10.0f}) {
    auto params = scalar_params(0.0f);
    AdamState state;
    adam_step(params, scalar_grads(g), state, config.lr0, config);
    const double step = static_cast<double>(params.at("w")[0]);
    CHECK(std::abs(std::abs(step) - config.lr0) / config.lr0 < 1e-3);
    CHECK(std::signbit(step) != std::signbit(-g));  // opposite sign of g... step = -lr*sign(g)
  }
}

TEST_CASE("adam_step is deterministic and aborts cleanly on bad gradients") {
  AdamConfig config;
  auto run = [&] {
    auto params = scalar_params(0.5f);
    AdamState state;
    for (int i = 0; i < 10; ++i)
      adam_step(params, scalar_grads(0.1f * static_cast<float>(i % 3) - 0.1f), state,
                lr_at(i, config), config);
    return params.at("w")[0];
  };
  CHECK(run() == run());

  auto params = scalar_params(0.5f);
  AdamState state;
  adam_step(params, scalar_grads(1.0f), state, config.lr0, config);
  const float before = params.at("w")[0];
  const auto before_m = state.first_moment[0][0];
  CHECK_THROWS_AS(
      adam_step(params, scalar_grads(std::numeric_limits<float>::quiet_NaN()), state,
                config.lr0, config),
      Error);
  CHECK(params.at("w")[0] == before);             // step aborted
  CHECK(state.first_moment[0][0] == before_m);    // state untouched

  ParameterSet wrong;
  wrong.add("w", Tensor({2}, 0.0f));
  CHECK_THROWS_AS(adam_step(params, wrong, state, config.lr0, config), Error);
}

TEST_CASE("train epochs=0 returns initialized params and an empty log") {
  const auto dataset = testsupport::tiny_dataset(4, 16, 3);
  UNetConfig net{2, 4, DownsampleMode::MaxPool, 2, 1};
  AdamConfig adam;
  adam.batch_size = 2;
  LossConfig loss;
  TrainOptions options;
  options.epochs = 0;
  options.seed = 5;
  const auto result = train(adam, net, loss, dataset, options);
  CHECK(result.log.empty());
  const auto fresh = unet_init_params<float>(net, 5);
  REQUIRE(fresh.count() == result.params.count());
  for (std::size_t i = 0; i < fresh.count(); ++i)
    for (std::size_t k = 0; k < fresh.item(i).value.size(); ++k)
      CHECK(fresh.item(i).value[k] == result.params.item(i).value[k]);
}

TEST_CASE("training is bit-reproducible under a fixed seed") {
  const auto dataset = testsupport::tiny_dataset(6, 16, 11);
  UNetConfig net{2, 4, DownsampleMode::MaxPool, 2, 1};
  AdamConfig adam;
  adam.batch_size = 4;
  LossConfig loss;
  TrainOptions options;
  options.epochs = 2;
  options.seed = 9;
  options.validation = &dataset;

  const auto a = train(adam, net, loss, dataset, options);
  const auto b = train(adam, net, loss, dataset, options);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t e = 0; e < a.log.size(); ++e)
    CHECK(format_metrics_line(a.log[e]) == format_metrics_line(b.log[e]));
  for (std::size_t i = 0; i < a.params.count(); ++i)
    for (std::size_t k = 0; k < a.params.item(i).value.size(); ++k)
      CHECK(a.params.item(i).value[k] == b.params.item(i).value[k]);
}

TEST_CASE("a short run decreases the training loss on a learnable toy set") {
  const auto dataset = testsupport::tiny_dataset(8, 16, 21);
  UNetConfig net{2, 4, DownsampleMode::MaxPool, 2, 1};
  AdamConfig adam;
  adam.batch_size = 4;
  adam.lr0 = 1e-3;
  LossConfig loss;  // dbcef
  TrainOptions options;
  options.epochs = 4;
  options.seed = 1;
  const auto result = train(adam, net, loss, dataset, options);
  REQUIRE(result.log.size() == 4);
  CHECK(result.log.back().train_loss < result.log.front().train_loss);
}

TEST_CASE("train validates inputs and reports divergence as a numeric error") {
  UNetConfig net{2, 4, DownsampleMode::MaxPool, 2, 1};
  AdamConfig adam;
  LossConfig loss;
  TrainOptions options;
  options.epochs = 1;

  const MemoryPatchSource empty{{}};
  CHECK_THROWS_AS(train(adam, net, loss, empty, options), Error);

  // an absurd learning rate blows the logits up to non-finite values within
  // a few steps; the loop must abort with a numeric diagnostic
  const auto dataset = testsupport::tiny_dataset(4, 16, 2);
  adam.lr0 = 1e18;
  adam.batch_size = 2;
  options.epochs = 50;
  bool diverged = false;
  try {
    train(adam, net, loss, dataset, options);
  } catch (const Error& e) {
    diverged = true;
    CHECK(e.kind() == ErrorKind::numeric);
    CHECK(std::string(e.what()).find("diverged") != std::string::npos);
  }
  CHECK(diverged);
}

TEST_CASE("metrics log lines follow the documented format") {
  EpochMetrics m;
  m.epoch = 3;
  m.lr = 2e-4;
  m.train_loss = 0.125;
  m.val_iou_h = 0.5;
  m.val_iou_nonh = 0.75;
  CHECK(format_metrics_line(m) ==
        "epoch=3 lr=0.0002 train_loss=0.125 val_iou_h=0.500000 val_iou_nonh=0.750000");
}
