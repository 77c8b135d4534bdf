#include "stimpute/experiment.hpp"

#include <cmath>
#include <filesystem>
#include <iostream>
#include <sstream>

#include "stimpute/errors.hpp"
#include "stimpute/training.hpp"

namespace stimpute {

namespace {

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> items;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) items.push_back(item.substr(b, e - b + 1));
  }
  return items;
}

bool is_model_method(const std::string& method) {
  return method == "st-impute" || method == "transformer";
}

} // namespace

ExperimentSpec load_experiment_spec(const std::string& path) {
  auto kv = parse_config_file(path);
  ExperimentSpec spec;

  if (auto it = kv.find("dataset"); it != kv.end()) {
    if (it->second != "synthetic") spec.dataset_path = it->second;
    kv.erase(it);
  }
  if (auto it = kv.find("synthetic_n_series"); it != kv.end()) {
    spec.synthetic.n_series = std::stoul(it->second);
    kv.erase(it);
  }
  if (auto it = kv.find("synthetic_length"); it != kv.end()) {
    spec.synthetic.length = std::stoul(it->second);
    kv.erase(it);
  }
  if (auto it = kv.find("synthetic_n_features"); it != kv.end()) {
    spec.synthetic.n_features = std::stoul(it->second);
    kv.erase(it);
  }
  if (auto it = kv.find("synthetic_seed"); it != kv.end()) {
    spec.synthetic.seed = std::stoull(it->second);
    kv.erase(it);
  }
  if (auto it = kv.find("synthetic_task"); it != kv.end()) {
    if (it->second == "none") spec.synthetic.task = TaskKind::kNone;
    else if (it->second == "classification") spec.synthetic.task = TaskKind::kClassification;
    else if (it->second == "regression") spec.synthetic.task = TaskKind::kRegression;
    else throw DataError("experiment: bad synthetic_task '" + it->second + "'");
    kv.erase(it);
  }
  if (auto it = kv.find("patterns"); it != kv.end()) {
    spec.patterns.clear();
    for (const auto& name : split_list(it->second))
      spec.patterns.push_back(pattern_from_name(name));
    kv.erase(it);
  }
  if (auto it = kv.find("rates"); it != kv.end()) {
    spec.rates.clear();
    for (const auto& r : split_list(it->second)) spec.rates.push_back(std::stod(r));
    kv.erase(it);
  }
  if (auto it = kv.find("methods"); it != kv.end()) {
    spec.methods = split_list(it->second);
    kv.erase(it);
  }
  if (auto it = kv.find("test_fraction"); it != kv.end()) {
    spec.test_fraction = std::stod(it->second);
    kv.erase(it);
  }

  apply_model_config_keys(kv, spec.model);
  apply_train_config_keys(kv, spec.train_config);
  reject_unknown_keys(kv, "experiment spec");

  if (spec.methods.empty()) throw DataError("experiment: no methods listed");
  if (spec.rates.empty()) throw DataError("experiment: no rates listed");
  for (double r : spec.rates)
    if (r <= 0.0 || r >= 1.0)
      throw DataError("experiment: rates must be in (0, 1)");
  return spec;
}

namespace {

struct ScoredCell {
  double sq_sum = 0.0;
  double abs_sum = 0.0;
  std::size_t count = 0;

  void add(double pred, double truth) {
    const double d = pred - truth;
    sq_sum += d * d;
    abs_sum += std::abs(d);
    ++count;
  }
};

// Downstream metrics of a trained model on the corrupted test series.
void score_downstream(const StImputeModel& model,
                      const std::vector<Corruption>& corruptions, ReportRow& row) {
  if (model.config.task == TaskKind::kNone) return;

  std::vector<double> scores, preds, targets;
  std::vector<int> labels;
  for (const auto& c : corruptions) {
    if (!c.corrupted.label.has_value()) continue;
    Tensor input(c.corrupted.values.rows(), c.corrupted.values.cols(), 0.0);
    for (std::size_t i = 0; i < input.rows(); ++i)
      for (std::size_t j = 0; j < input.cols(); ++j)
        if (c.corrupted.natural_missing(i, j) == 0.0)
          input.at(i, j) = c.corrupted.values(i, j);
    ForwardResult fwd = forward_series(model, input, c.corrupted.natural_missing,
                                       /*training=*/false);
    if (model.config.task == TaskKind::kClassification) {
      // binary score: softmax probability of class 1
      if (model.config.n_classes != 2) continue;
      const double z0 = fwd.task_output(0, 0), z1 = fwd.task_output(0, 1);
      const double mx = std::max(z0, z1);
      const double p1 = std::exp(z1 - mx) / (std::exp(z0 - mx) + std::exp(z1 - mx));
      scores.push_back(p1);
      labels.push_back(static_cast<int>(std::llround(*c.corrupted.label)));
    } else {
      preds.push_back(fwd.task_output.item());
      targets.push_back(*c.corrupted.label);
    }
  }

  if (model.config.task == TaskKind::kClassification && !labels.empty()) {
    bool pos = false, neg = false;
    for (int l : labels) (l != 0 ? pos : neg) = true;
    if (pos && neg) {
      row.auc_roc = auc_roc(scores, labels);
      row.pr_auc = pr_auc(scores, labels);
    }
  } else if (!preds.empty()) {
    double sq = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const double d = preds[i] - targets[i];
      sq += d * d;
    }
    row.downstream_rmse = std::sqrt(sq / static_cast<double>(preds.size()));
  }
}

} // namespace

ImputationReport run_experiment(const ExperimentSpec& spec) {
  Dataset dataset = spec.dataset_path.empty() ? generate_synthetic(spec.synthetic)
                                              : load_csv(spec.dataset_path);

  ModelConfig model_config = spec.model;
  model_config.n_features = dataset.n_features;
  model_config.task = dataset.task;
  model_config.validate();

  TimeSeriesBatch train_split, test_split;
  split_train_test(dataset, spec.test_fraction, spec.train_config.seed,
                   train_split, test_split);

  const Normalization norm = fit_normalization(train_split);
  apply_normalization(train_split, norm);
  apply_normalization(test_split, norm);

  std::filesystem::create_directories(spec.out_dir);

  // train every learnable method once
  std::map<std::string, StImputeModel> models;
  for (const auto& method : spec.methods) {
    if (!is_model_method(method)) continue;
    ModelConfig mc = model_config;
    mc.attention_kind = method == "st-impute" ? AttentionKind::kSparse
                                              : AttentionKind::kSoftmax;
    StImputeModel model = StImputeModel::init(mc, spec.train_config.seed);
    TrainResult tr = train(model, train_split, spec.train_config);
    write_loss_trace_csv(tr.trace,
                         spec.out_dir + "/loss_trace_" + method + ".csv");
    models.emplace(method, std::move(model));
  }

  ImputationReport report;
  for (std::size_t pi = 0; pi < spec.patterns.size(); ++pi) {
    for (std::size_t ri = 0; ri < spec.rates.size(); ++ri) {
      const MissingnessPattern pattern = spec.patterns[pi];
      const double rate = spec.rates[ri];

      // one corruption of the test split, shared by every method
      std::vector<Corruption> corruptions;
      corruptions.reserve(test_split.series.size());
      for (std::size_t si = 0; si < test_split.series.size(); ++si) {
        MissingnessSpec ms;
        ms.pattern = pattern;
        ms.rate = rate;
        ms.seed = spec.train_config.seed * 0x9e3779b97f4a7c15ULL +
                  (pi * 1000 + ri) * 131 + si;
        corruptions.push_back(apply_missingness(test_split.series[si], ms));
      }

      for (const auto& method : spec.methods) {
        try {
          ScoredCell cell;
          for (std::size_t si = 0; si < corruptions.size(); ++si) {
            const Corruption& c = corruptions[si];
            const Series& truth = test_split.series[si];

            Tensor completed;
            if (method == "mean") completed = impute_mean(c.corrupted, 0.0);
            else if (method == "last") completed = impute_last(c.corrupted, 0.0);
            else if (method == "linear") completed = impute_linear(c.corrupted, 0.0);
            else if (is_model_method(method))
              completed = impute(c.corrupted, models.at(method));
            else
              throw DataError("experiment: unknown method '" + method + "'");

            for (std::size_t i = 0; i < completed.rows(); ++i)
              for (std::size_t j = 0; j < completed.cols(); ++j)
                if (c.holdout_mask(i, j) != 0.0)
                  cell.add(completed(i, j), truth.values(i, j));
          }
          if (cell.count == 0)
            throw ContractError("experiment: nothing held out to score");

          ReportRow row;
          row.method = method;
          row.pattern = pattern_name(pattern);
          row.rate = rate;
          row.rmse = std::sqrt(cell.sq_sum / static_cast<double>(cell.count));
          row.mae = cell.abs_sum / static_cast<double>(cell.count);
          row.scored = cell.count;
          if (is_model_method(method))
            score_downstream(models.at(method), corruptions, row);
          report.rows.push_back(std::move(row));
        } catch (const std::exception& e) {
          std::cerr << "experiment: cell (" << method << ", "
                    << pattern_name(pattern) << ", " << rate
                    << ") failed: " << e.what() << "\n";
        }
      }
    }
  }

  report.write_csv(spec.out_dir + "/report.csv");
  return report;
}

} // namespace stimpute
