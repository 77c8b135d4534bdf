#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stimpute/objectives.hpp"

namespace stimpute {

struct TrainConfig {
  double learning_rate = 0.0002;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  double mim_rate = 0.5;
  std::uint64_t seed = 42;
  double labeled_fraction = 1.0; // fraction of training labels exposed
  double clip_norm = 0.0;        // 0 disables gradient clipping
  double validation_fraction = 0.2;
  std::size_t patience = 10;     // early stopping on validation MIM loss
  bool early_stopping = true;

  void validate() const;
};

// First/second moment accumulators, one slot per parameter tensor in
// StImputeModel::parameters() order.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::size_t step = 0;

  static AdamState init(const StImputeModel& model);
};

// One Adam update with bias correction over every trainable tensor with an
// accumulated gradient. Aborts with the parameter name on a non-finite
// gradient.
void adam_step(StImputeModel& model, AdamState& state, const TrainConfig& config);

struct EpochTrace {
  std::size_t epoch = 0;
  double mim = 0.0;
  double nrl = 0.0;
  double downstream = 0.0;
  double total = 0.0;
  double val_mim = 0.0; // NaN when no validation split
};

struct TrainResult {
  std::vector<EpochTrace> trace;
  std::size_t best_epoch = 0;
};

// Seeded training loop: per epoch shuffle, fresh MIM masks, combined loss,
// backward, Adam. Labels are hidden for (1 - labeled_fraction) of the
// labeled series, chosen deterministically. With early stopping enabled the
// best validation-MIM parameters are restored at the end.
TrainResult train(StImputeModel& model, const TimeSeriesBatch& dataset,
                  const TrainConfig& config);

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
};

// Compares tape gradients of the combined loss against central differences
// for every trainable tensor. Dropout is disabled (eval-mode forward) so
// both sides see the same function.
std::vector<GradCheckEntry> gradient_check(StImputeModel& model,
                                           const TimeSeriesBatch& batch,
                                           double eps = 1e-5);

// epoch,mim,nrl,downstream,total,val_mim
void write_loss_trace_csv(const std::vector<EpochTrace>& trace,
                          const std::string& path);

} // namespace stimpute
