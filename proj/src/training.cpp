#include "stimpute/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>

#include "stimpute/errors.hpp"

namespace stimpute {

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw ContractError("TrainConfig: learning_rate must be > 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
    throw ContractError("TrainConfig: betas must be in [0, 1)");
  if (epsilon <= 0.0) throw ContractError("TrainConfig: epsilon must be > 0");
  if (epochs == 0) throw ContractError("TrainConfig: epochs must be >= 1");
  if (batch_size == 0) throw ContractError("TrainConfig: batch_size must be >= 1");
  if (mim_rate < 0.0 || mim_rate >= 1.0)
    throw ContractError("TrainConfig: mim_rate must be in [0, 1)");
  if (labeled_fraction < 0.0 || labeled_fraction > 1.0)
    throw ContractError("TrainConfig: labeled_fraction must be in [0, 1]");
  if (validation_fraction < 0.0 || validation_fraction >= 1.0)
    throw ContractError("TrainConfig: validation_fraction must be in [0, 1)");
}

AdamState AdamState::init(const StImputeModel& model) {
  AdamState state;
  for (const auto& [name, t] : model.parameters()) {
    (void)name;
    state.m.emplace_back(t.size(), 0.0);
    state.v.emplace_back(t.size(), 0.0);
  }
  return state;
}

void adam_step(StImputeModel& model, AdamState& state, const TrainConfig& config) {
  auto params = model.parameters();
  if (params.size() != state.m.size())
    throw ContractError("adam_step: state does not match model parameters");

  // optional global-norm clipping; sparse-attention boundary subgradients
  // can spike, so the knob exists even though it defaults off
  double scale = 1.0;
  if (config.clip_norm > 0.0) {
    double sq = 0.0;
    for (auto& [name, t] : params) {
      (void)name;
      if (!t.requires_grad() || !t.has_gradient()) continue;
      for (double g : t.gradient()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > config.clip_norm) scale = config.clip_norm / norm;
  }

  ++state.step;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));

  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor t = params[p].second;
    if (!t.requires_grad() || !t.has_gradient()) continue;
    const auto grad = t.gradient();
    auto& m = state.m[p];
    auto& v = state.v[p];
    auto& data = t.mutable_values();
    for (std::size_t i = 0; i < grad.size(); ++i) {
      const double g = grad[i] * scale;
      if (!std::isfinite(g))
        throw NumericalError("adam_step: non-finite gradient in parameter '" +
                             params[p].first + "'");
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      data[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

namespace {

// Deterministic Fisher-Yates; std::shuffle is not pinned across library
// implementations.
template <typename T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = rng() % i;
    std::swap(v[i - 1], v[j]);
  }
}

std::vector<std::vector<double>> snapshot_params(const StImputeModel& model) {
  std::vector<std::vector<double>> snap;
  for (const auto& [name, t] : model.parameters()) {
    (void)name;
    snap.emplace_back(t.values().begin(), t.values().end());
  }
  return snap;
}

void restore_params(StImputeModel& model, const std::vector<std::vector<double>>& snap) {
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i)
    params[i].second.mutable_values() = snap[i];
}

double validation_mim(const TimeSeriesBatch& val, const StImputeModel& model) {
  if (val.series.empty()) return std::numeric_limits<double>::quiet_NaN();
  return loss_combined(val, model, /*training=*/false).mim;
}

} // namespace

TrainResult train(StImputeModel& model, const TimeSeriesBatch& dataset,
                  const TrainConfig& config) {
  config.validate();
  if (dataset.series.empty()) throw ContractError("train: empty dataset");

  std::mt19937_64 rng(config.seed);

  std::vector<std::size_t> order(dataset.series.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  seeded_shuffle(order, rng);

  // 80/20-style train/validation split when early stopping is on
  std::size_t n_val = 0;
  if (config.early_stopping && config.validation_fraction > 0.0 &&
      dataset.series.size() >= 5)
    n_val = std::max<std::size_t>(
        1, static_cast<std::size_t>(config.validation_fraction *
                                    static_cast<double>(dataset.series.size())));

  TimeSeriesBatch train_set, val_set;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i < order.size() - n_val)
      train_set.series.push_back(dataset.series[order[i]]);
    else
      val_set.series.push_back(dataset.series[order[i]]);
  }

  // expose labels for only labeled_fraction of the labeled training series
  std::vector<std::size_t> labeled;
  for (std::size_t i = 0; i < train_set.series.size(); ++i)
    if (train_set.series[i].label.has_value()) labeled.push_back(i);
  seeded_shuffle(labeled, rng);
  const std::size_t keep = static_cast<std::size_t>(
      std::llround(config.labeled_fraction * static_cast<double>(labeled.size())));
  for (std::size_t i = keep; i < labeled.size(); ++i)
    train_set.series[labeled[i]].label.reset();

  // fixed validation masks so epochs are comparable
  sample_mim_mask(val_set, config.mim_rate, config.seed ^ 0xABCDEF0123456789ULL);

  AdamState state = AdamState::init(model);
  TrainResult result;

  double best_val = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_params;
  std::size_t stale = 0;

  std::vector<std::size_t> train_order(train_set.series.size());
  for (std::size_t i = 0; i < train_order.size(); ++i) train_order[i] = i;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    seeded_shuffle(train_order, rng);
    sample_mim_mask(train_set, config.mim_rate,
                    config.seed * 0x9e3779b97f4a7c15ULL + epoch);

    EpochTrace trace;
    trace.epoch = epoch;
    std::size_t seen = 0;

    for (std::size_t start = 0; start < train_order.size();
         start += config.batch_size) {
      TimeSeriesBatch batch;
      const std::size_t end =
          std::min(start + config.batch_size, train_order.size());
      for (std::size_t i = start; i < end; ++i)
        batch.series.push_back(train_set.series[train_order[i]]);

      model.zero_grads();
      CombinedLoss loss;
      try {
        loss = loss_combined(batch, model, /*training=*/true,
                             config.seed + epoch * 7919 + start);
      } catch (const NumericalError& e) {
        throw NumericalError("train: " + std::string(e.what()) + " at epoch " +
                             std::to_string(epoch) + ", batch offset " +
                             std::to_string(start));
      }
      ops::backward(loss.total);
      adam_step(model, state, config);

      const double w = static_cast<double>(batch.series.size());
      trace.mim += loss.mim * w;
      trace.nrl += loss.nrl * w;
      trace.downstream += loss.downstream * w;
      trace.total += loss.total.item() * w;
      seen += batch.series.size();
    }
    const double inv = 1.0 / static_cast<double>(seen);
    trace.mim *= inv;
    trace.nrl *= inv;
    trace.downstream *= inv;
    trace.total *= inv;
    trace.val_mim = validation_mim(val_set, model);
    result.trace.push_back(trace);

    if (n_val > 0) {
      if (trace.val_mim < best_val) {
        best_val = trace.val_mim;
        best_params = snapshot_params(model);
        result.best_epoch = epoch;
        stale = 0;
      } else if (++stale >= config.patience) {
        break;
      }
    } else {
      result.best_epoch = epoch;
    }
  }

  if (!best_params.empty()) restore_params(model, best_params);
  return result;
}

std::vector<GradCheckEntry> gradient_check(StImputeModel& model,
                                           const TimeSeriesBatch& batch,
                                           double eps) {
  TimeSeriesBatch work = batch;
  bool need_masks = false;
  double mim_total = 0.0;
  for (const auto& s : work.series) {
    if (!s.mim_mask.valid()) {
      need_masks = true;
      continue;
    }
    for (double v : s.mim_mask.values()) mim_total += v;
  }
  if (need_masks || mim_total == 0.0) sample_mim_mask(work, 0.3, 1);

  // one backward pass collects every tape gradient
  model.zero_grads();
  CombinedLoss loss = loss_combined(work, model, /*training=*/false);
  ops::backward(loss.total);

  std::vector<GradCheckEntry> report;
  for (auto& [name, t] : model.parameters()) {
    if (!t.requires_grad()) continue; // frozen tensors stay out of the report
    std::vector<double> tape(t.size(), 0.0);
    if (t.has_gradient())
      tape.assign(t.gradient().begin(), t.gradient().end());

    auto f = [&](const Tensor&) {
      return loss_combined(work, model, /*training=*/false).total.item();
    };
    const std::vector<double> fd = ops::finite_difference_gradient(f, t, eps);

    double worst = 0.0;
    for (std::size_t i = 0; i < fd.size(); ++i) {
      const double denom = std::max({std::abs(tape[i]), std::abs(fd[i]), 1e-4});
      worst = std::max(worst, std::abs(tape[i] - fd[i]) / denom);
    }
    report.push_back({name, worst});
  }
  return report;
}

void write_loss_trace_csv(const std::vector<EpochTrace>& trace,
                          const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("write_loss_trace_csv: cannot open " + path);
  out << std::setprecision(17);
  out << "epoch,mim,nrl,downstream,total,val_mim\n";
  for (const auto& t : trace)
    out << t.epoch << ',' << t.mim << ',' << t.nrl << ',' << t.downstream << ','
        << t.total << ',' << t.val_mim << '\n';
}

} // namespace stimpute
