#include "sseg/optim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include "sseg/checkpoint.hpp"
#include "sseg/evalkit.hpp"
#include "sseg/rng.hpp"

namespace sseg {

void validate(const AdamConfig& config) {
  if (!(config.lr0 > 0)) throw config_error("adam lr0 must be > 0");
  if (!(config.beta1 >= 0 && config.beta1 < 1)) throw config_error("adam beta1 must be in [0,1)");
  if (!(config.beta2 >= 0 && config.beta2 < 1)) throw config_error("adam beta2 must be in [0,1)");
  if (!(config.eps_adam > 0)) throw config_error("adam eps must be > 0");
  if (!(config.decay > 0 && config.decay <= 1)) throw config_error("decay must be in (0,1]");
  if (config.decay_every < 1) throw config_error("decay_every must be >= 1");
  if (config.batch_size < 1) throw config_error("batch_size must be >= 1");
}

double lr_at(int epoch, const AdamConfig& config) {
  if (epoch < 0) throw config_error("epoch must be >= 0");
  const int steps = epoch / config.decay_every;
  return config.lr0 * std::pow(config.decay, static_cast<double>(steps));
}

template struct AdamStateT<float>;
template struct AdamStateT<double>;

template <typename T>
void adam_step(ParameterSetT<T>& params, const ParameterSetT<T>& grads, AdamStateT<T>& state,
               double lr, const AdamConfig& config) {
  validate(config);
  if (grads.count() != params.count())
    throw shape_error("adam_step: gradient/parameter count mismatch");

  if (state.first_moment.empty()) {
    for (std::size_t i = 0; i < params.count(); ++i) {
      state.first_moment.emplace_back(params.item(i).value.shape(), T(0));
      state.second_moment.emplace_back(params.item(i).value.shape(), T(0));
    }
    state.step = 0;
  }
  if (state.first_moment.size() != params.count())
    throw shape_error("adam_step: optimizer state does not match parameters");

  // Abort the whole step before touching anything if any gradient is bad.
  for (std::size_t i = 0; i < params.count(); ++i) {
    const auto& g = grads.item(i);
    if (g.name != params.item(i).name || !g.value.same_shape(params.item(i).value))
      throw shape_error("adam_step: gradient " + g.name + " misaligned with parameters");
    if (!all_finite(g.value))
      throw numeric_error("adam_step: non-finite gradient in " + g.name + "; step aborted");
  }

  state.step += 1;
  const double b1 = config.beta1, b2 = config.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

  for (std::size_t i = 0; i < params.count(); ++i) {
    TensorT<T>& p = params.item(i).value;
    const TensorT<T>& g = grads.item(i).value;
    TensorT<T>& m = state.first_moment[i];
    TensorT<T>& v = state.second_moment[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double gk = static_cast<double>(g[k]);
      const double mk = b1 * static_cast<double>(m[k]) + (1.0 - b1) * gk;
      const double vk = b2 * static_cast<double>(v[k]) + (1.0 - b2) * gk * gk;
      m[k] = static_cast<T>(mk);
      v[k] = static_cast<T>(vk);
      const double mhat = mk / correction1;
      const double vhat = vk / correction2;
      p[k] = static_cast<T>(static_cast<double>(p[k]) -
                            lr * mhat / (std::sqrt(vhat) + config.eps_adam));
    }
  }
}

template void adam_step(ParameterSetT<float>&, const ParameterSetT<float>&, AdamStateT<float>&,
                        double, const AdamConfig&);
template void adam_step(ParameterSetT<double>&, const ParameterSetT<double>&,
                        AdamStateT<double>&, double, const AdamConfig&);

std::string format_metrics_line(const EpochMetrics& m) {
  char buf[192];
  std::snprintf(buf, sizeof(buf),
                "epoch=%d lr=%.8g train_loss=%.8g val_iou_h=%.6f val_iou_nonh=%.6f", m.epoch,
                m.lr, m.train_loss, m.val_iou_h, m.val_iou_nonh);
  return std::string(buf);
}

TrainResult train(const AdamConfig& optim_config, const UNetConfig& net_config,
                  const LossConfig& loss_config, const PatchSource& dataset,
                  const TrainOptions& options) {
  validate(optim_config);
  validate(net_config);
  validate(loss_config);
  if (options.epochs < 0) throw config_error("epochs must be >= 0");
  if (dataset.size() == 0) throw config_error("training dataset is empty");

  TrainResult result;
  result.params = unet_init_params<float>(net_config, options.seed);
  AdamState state;

  std::ofstream log_file;
  if (!options.log_path.empty()) {
    log_file.open(options.log_path, std::ios::app);
    if (!log_file) throw io_error("cannot open metrics log: " + options.log_path);
  }

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  double last_finite_loss = std::numeric_limits<double>::quiet_NaN();
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    const double lr = lr_at(epoch, optim_config);

    // One full Fisher-Yates permutation per epoch from the run seed.
    Rng shuffle_rng(derive_seed(options.seed, 0x100000ULL + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(
          shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0.0;
    std::size_t sample_count = 0;
    const auto bs = static_cast<std::size_t>(optim_config.batch_size);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      std::vector<TrainingExample> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(dataset.at(order[i]));

      std::vector<const GrayImage*> images;
      std::vector<const MaskImage*> masks;
      for (const auto& ex : batch) {
        images.push_back(&ex.image);
        masks.push_back(&ex.label);
      }
      const Tensor input = pack_image_batch(images);
      const Tensor targets = pack_mask_batch(masks, net_config.num_classes);

      UNetContext<float> ctx;
      double batch_loss;
      Tensor probs;
      try {
        probs = unet_forward(net_config, result.params, input, &ctx);
        batch_loss = loss_forward(probs, targets, loss_config);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::numeric) throw;
        char msg[256];
        std::snprintf(msg, sizeof(msg),
                      "training diverged at epoch %d (%s); last finite loss %.8g", epoch,
                      e.what(), last_finite_loss);
        throw numeric_error(msg);
      }
      if (!std::isfinite(batch_loss)) {
        char msg[160];
        std::snprintf(msg, sizeof(msg),
                      "training diverged: non-finite loss at epoch %d; last finite loss %.8g",
                      epoch, last_finite_loss);
        throw numeric_error(msg);
      }
      last_finite_loss = batch_loss;

      const Tensor grad_logits = loss_backward(probs, targets, loss_config);
      ParameterSet grads = unet_backward(net_config, result.params, ctx, grad_logits);
      adam_step(result.params, grads, state, lr, optim_config);

      loss_sum += batch_loss * static_cast<double>(end - start);
      sample_count += end - start;
    }

    EpochMetrics metrics;
    metrics.epoch = epoch;
    metrics.lr = lr;
    metrics.train_loss = sample_count ? loss_sum / static_cast<double>(sample_count) : 0.0;
    if (options.validation && options.validation->size() > 0) {
      const IoUReport rep = evaluate_source(net_config, result.params, *options.validation,
                                            optim_config.batch_size);
      metrics.val_iou_nonh = rep.classes[0].iou;
      metrics.val_iou_h = rep.classes[1].iou;
    } else {
      metrics.val_iou_h = std::numeric_limits<double>::quiet_NaN();
      metrics.val_iou_nonh = std::numeric_limits<double>::quiet_NaN();
    }
    result.log.push_back(metrics);
    if (log_file) {
      log_file << format_metrics_line(metrics) << "\n";
      log_file.flush();
    }
  }

  if (!options.checkpoint_path.empty())
    save_checkpoint(options.checkpoint_path, net_config, result.params);
  return result;
}

}  // namespace sseg
