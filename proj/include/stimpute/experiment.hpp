#pragma once

#include <string>
#include <vector>

#include "stimpute/baselines_metrics.hpp"
#include "stimpute/data.hpp"
#include "stimpute/missingness.hpp"

namespace stimpute {

// A full evaluation sweep: dataset x missingness grid x method list.
struct ExperimentSpec {
  std::string dataset_path; // empty means synthetic
  SyntheticSpec synthetic;
  std::vector<MissingnessPattern> patterns{MissingnessPattern::kMcar};
  std::vector<double> rates{0.5};
  std::vector<std::string> methods{"st-impute", "mean", "last"};
  ModelConfig model;
  TrainConfig train_config;
  double test_fraction = 0.2;
  std::string out_dir = ".";
};

// Reads an experiment config file (flat key = value). Recognized keys beyond
// the model/train ones: dataset, synthetic_n_series, synthetic_length,
// synthetic_n_features, synthetic_seed, synthetic_task, patterns, rates,
// methods, test_fraction. Unknown keys are errors.
ExperimentSpec load_experiment_spec(const std::string& path);

// Trains each learnable method once, then scores every method on every
// pattern x rate cell of the corrupted test split. Writes report.csv and
// per-method loss traces into out_dir. A failing cell is logged and skipped
// without voiding the others.
ImputationReport run_experiment(const ExperimentSpec& spec);

} // namespace stimpute
