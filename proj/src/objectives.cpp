#include "stimpute/objectives.hpp"

#include <cmath>
#include <iostream>
#include <random>

#include "stimpute/errors.hpp"

namespace stimpute {

void sample_mim_mask(Series& s, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0)
    throw ContractError("sample_mim_mask: rate must be in [0, 1)");
  const std::size_t n = s.values.rows(), f = s.values.cols();
  s.mim_mask = Tensor(n, f, 0.0);

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::size_t observed_left = 0;
  std::size_t last_masked_i = 0, last_masked_j = 0;
  bool any_masked = false;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < f; ++j) {
      if (s.natural_missing(i, j) != 0.0) continue;
      if (rate > 0.0 && unif(rng) < rate) {
        s.mim_mask.at(i, j) = 1.0;
        last_masked_i = i;
        last_masked_j = j;
        any_masked = true;
      } else {
        ++observed_left;
      }
    }
  }
  if (observed_left == 0 && any_masked) {
    std::cerr << "sample_mim_mask: mask would remove every observed entry; "
                 "keeping one unmasked\n";
    s.mim_mask.at(last_masked_i, last_masked_j) = 0.0;
  }
  refresh_observed_mask(s);
}

void sample_mim_mask(TimeSeriesBatch& batch, double rate, std::uint64_t seed) {
  for (std::size_t i = 0; i < batch.series.size(); ++i)
    sample_mim_mask(batch.series[i], rate, seed * 0x9e3779b97f4a7c15ULL + i);
}

Tensor loss_mim(const Tensor& truth, const Tensor& prediction, const Tensor& mim_mask) {
  return ops::masked_mae(prediction, truth, mim_mask);
}

Tensor loss_nrl(const Tensor& truth, const Tensor& prediction, const Tensor& observed_mask) {
  return ops::masked_mae(prediction, truth, observed_mask);
}

Tensor loss_downstream(const Tensor& task_output, double label, TaskKind task) {
  switch (task) {
    case TaskKind::kClassification: {
      const double rounded = std::round(label);
      if (rounded < 0.0 || rounded != label)
        throw ContractError("loss_downstream: invalid class label " +
                            std::to_string(label));
      return ops::softmax_cross_entropy(task_output,
                                        static_cast<std::size_t>(rounded));
    }
    case TaskKind::kRegression:
      return ops::abs_error(task_output, label);
    case TaskKind::kNone:
      throw ContractError("loss_downstream: label supplied but task is none");
  }
  throw ContractError("loss_downstream: unreachable");
}

namespace {

double mask_sum(const Tensor& mask) {
  double s = 0.0;
  for (double v : mask.values()) s += v;
  return s;
}

// Model input: zero at every position that is naturally missing or
// artificially masked; the mask channel flags exactly those positions.
void build_model_input(const Series& s, Tensor& input, Tensor& input_missing) {
  const std::size_t n = s.values.rows(), f = s.values.cols();
  input = Tensor(n, f, 0.0);
  input_missing = Tensor(n, f, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < f; ++j) {
      const bool hidden =
          s.natural_missing(i, j) != 0.0 || (s.mim_mask.valid() && s.mim_mask(i, j) != 0.0);
      if (hidden)
        input_missing.at(i, j) = 1.0;
      else
        input.at(i, j) = s.values(i, j);
    }
  }
}

} // namespace

CombinedLoss loss_combined(const TimeSeriesBatch& batch, const StImputeModel& model,
                           bool training, std::uint64_t dropout_seed) {
  if (batch.series.empty())
    throw ContractError("loss_combined: empty batch");

  // Pool MIM/NRL across the batch: sum of per-series masked absolute errors
  // divided by the total masked count, assembled from per-series means.
  double total_mim_count = 0.0, total_nrl_count = 0.0;
  for (const auto& s : batch.series) {
    if (s.mim_mask.valid()) total_mim_count += mask_sum(s.mim_mask);
    total_nrl_count += mask_sum(s.observed_mask);
  }

  Tensor total;
  CombinedLoss out;

  auto accumulate = [&total](const Tensor& term) {
    total = total.valid() ? ops::add(total, term) : term;
  };

  std::size_t labeled = 0;
  std::vector<Tensor> downstream_terms;
  Tensor mim_acc, nrl_acc;

  for (std::size_t idx = 0; idx < batch.series.size(); ++idx) {
    const Series& s = batch.series[idx];
    Tensor input, input_missing;
    build_model_input(s, input, input_missing);
    ForwardResult fwd = forward_series(model, input, input_missing, training,
                                       dropout_seed * 0x100000001b3ULL + idx);

    const double mim_count = s.mim_mask.valid() ? mask_sum(s.mim_mask) : 0.0;
    if (mim_count > 0.0 && total_mim_count > 0.0) {
      Tensor term = ops::scale(loss_mim(s.values, fwd.reconstruction, s.mim_mask),
                               mim_count / total_mim_count);
      mim_acc = mim_acc.valid() ? ops::add(mim_acc, term) : term;
    }
    const double nrl_count = mask_sum(s.observed_mask);
    if (nrl_count > 0.0 && total_nrl_count > 0.0) {
      Tensor term = ops::scale(loss_nrl(s.values, fwd.reconstruction, s.observed_mask),
                               nrl_count / total_nrl_count);
      nrl_acc = nrl_acc.valid() ? ops::add(nrl_acc, term) : term;
    }
    if (s.label.has_value() && model.config.task != TaskKind::kNone) {
      downstream_terms.push_back(
          loss_downstream(fwd.task_output, *s.label, model.config.task));
      ++labeled;
    }
  }

  if (mim_acc.valid()) {
    out.mim = mim_acc.item();
    accumulate(mim_acc);
  }
  if (nrl_acc.valid()) {
    out.nrl = nrl_acc.item();
    accumulate(nrl_acc);
  }
  if (!downstream_terms.empty()) {
    Tensor c = downstream_terms[0];
    for (std::size_t i = 1; i < downstream_terms.size(); ++i)
      c = ops::add(c, downstream_terms[i]);
    c = ops::scale(c, 1.0 / static_cast<double>(downstream_terms.size()));
    out.downstream = c.item();
    accumulate(c);
  }
  out.labeled_count = labeled;

  if (!total.valid())
    throw ContractError("loss_combined: no loss terms (no masks and no labels)");
  if (!std::isfinite(total.item()))
    throw NumericalError("loss_combined: non-finite loss");
  out.total = total;
  return out;
}

} // namespace stimpute
