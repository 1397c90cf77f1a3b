#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sseg/dataset.hpp"
#include "sseg/losses.hpp"
#include "sseg/unet.hpp"

namespace sseg {

struct AdamConfig {
  double lr0 = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  double decay = 0.8;
  int decay_every = 30;  // epochs per learning-rate step
  int batch_size = 32;
};

void validate(const AdamConfig& config);

// Step-decay schedule: lr0 * decay^floor(epoch / decay_every).
double lr_at(int epoch, const AdamConfig& config);

template <typename T>
struct AdamStateT {
  std::vector<TensorT<T>> first_moment;
  std::vector<TensorT<T>> second_moment;
  std::int64_t step = 0;
};

using AdamState = AdamStateT<float>;

// One bias-corrected Adam update, applied in place. A non-finite gradient
// aborts the step before any parameter or moment is touched.
template <typename T>
void adam_step(ParameterSetT<T>& params, const ParameterSetT<T>& grads, AdamStateT<T>& state,
               double lr, const AdamConfig& config);

struct EpochMetrics {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double val_iou_h = 0;
  double val_iou_nonh = 0;
};

std::string format_metrics_line(const EpochMetrics& m);

struct TrainOptions {
  int epochs = 0;
  std::uint64_t seed = 0;
  std::string checkpoint_path;             // written after the last epoch when set
  std::string log_path;                    // append-only metrics log when set
  const PatchSource* validation = nullptr; // per-epoch IoU when set
};

struct TrainResult {
  ParameterSet params;
  std::vector<EpochMetrics> log;
};

// Deterministic training loop: seeded init, one full shuffle per epoch derived
// from the run seed, last partial batch kept. Throws a numeric error with the
// last finite loss if training diverges.
TrainResult train(const AdamConfig& optim_config, const UNetConfig& net_config,
                  const LossConfig& loss_config, const PatchSource& dataset,
                  const TrainOptions& options);

extern template struct AdamStateT<float>;
extern template struct AdamStateT<double>;

}  // namespace sseg
