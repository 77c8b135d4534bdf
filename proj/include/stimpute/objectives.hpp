#pragma once

#include <cstdint>

#include "stimpute/batch.hpp"
#include "stimpute/model.hpp"

namespace stimpute {

// Resamples the artificial training mask: every originally-observed entry is
// independently masked with the given probability. Guarantees at least one
// observed entry survives per series (reducing the mask and warning
// otherwise). Deterministic under seed. Rebuilds observed_mask.
void sample_mim_mask(Series& s, double rate, std::uint64_t seed);
void sample_mim_mask(TimeSeriesBatch& batch, double rate, std::uint64_t seed);

// Mean absolute error over artificially masked entries. Errors when the mask
// selects nothing; callers composing a batch loss skip that case.
Tensor loss_mim(const Tensor& truth, const Tensor& prediction, const Tensor& mim_mask);

// Mean absolute error over the untouched observed entries.
Tensor loss_nrl(const Tensor& truth, const Tensor& prediction, const Tensor& observed_mask);

// Cross-entropy for classification, absolute error for regression.
Tensor loss_downstream(const Tensor& task_output, double label, TaskKind task);

struct CombinedLoss {
  Tensor total;          // tape scalar, L_MIM + L_NRL + L_c
  double mim = 0.0;      // component values for loss traces
  double nrl = 0.0;
  double downstream = 0.0;
  std::size_t labeled_count = 0;
};

// Runs the model over every series of the batch and assembles the combined
// loss. MIM and NRL pool their masked entries across the whole batch; the
// downstream term averages over labeled series only and contributes nothing
// when the batch is fully unlabeled.
CombinedLoss loss_combined(const TimeSeriesBatch& batch, const StImputeModel& model,
                           bool training = true, std::uint64_t dropout_seed = 0);

} // namespace stimpute
