// Command-line front end: simulate-missing, train, impute, evaluate, gradcheck.
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "stimpute/baselines_metrics.hpp"
#include "stimpute/data.hpp"
#include "stimpute/experiment.hpp"
#include "stimpute/missingness.hpp"
#include "stimpute/training.hpp"

using namespace stimpute;

namespace {

int run_simulate_missing(const std::string& input, const std::string& pattern,
                         double rate, std::uint64_t seed,
                         const std::string& output, const std::string& holdout) {
  const MissingnessPattern p = pattern_from_name(pattern);
  Dataset dataset = load_csv(input);

  Dataset corrupted = dataset;
  Dataset held = dataset;
  for (std::size_t i = 0; i < dataset.batch.series.size(); ++i) {
    MissingnessSpec spec{p, rate, seed + i};
    Corruption c = apply_missingness(dataset.batch.series[i], spec);
    corrupted.batch.series[i] = c.corrupted;

    // the holdout file keeps ground truth only at held-out cells
    Series& h = held.batch.series[i];
    const Series& orig = dataset.batch.series[i];
    h.natural_missing = Tensor(orig.values.rows(), orig.values.cols(), 0.0);
    Tensor values(orig.values.rows(), orig.values.cols(), 0.0);
    for (std::size_t r = 0; r < orig.values.rows(); ++r)
      for (std::size_t j = 0; j < orig.values.cols(); ++j) {
        if (c.holdout_mask(r, j) != 0.0)
          values.at(r, j) = orig.values(r, j);
        else
          h.natural_missing.at(r, j) = 1.0;
      }
    h.values = values;
    h.mim_mask = Tensor(orig.values.rows(), orig.values.cols(), 0.0);
    refresh_observed_mask(h);
  }
  save_csv(corrupted, output);
  save_csv(held, holdout);
  std::cout << "wrote " << output << " and " << holdout << "\n";
  return 0;
}

int run_train(const std::string& input, const std::string& config_path,
              double labeled_fraction, const std::string& checkpoint) {
  Dataset dataset = load_csv(input);

  ModelConfig model_config;
  TrainConfig train_config;
  if (!config_path.empty()) {
    auto kv = parse_config_file(config_path);
    apply_model_config_keys(kv, model_config);
    apply_train_config_keys(kv, train_config);
    reject_unknown_keys(kv, "train config");
  }
  model_config.n_features = dataset.n_features;
  if (model_config.task == TaskKind::kNone) model_config.task = dataset.task;
  train_config.labeled_fraction = labeled_fraction;
  model_config.validate();
  train_config.validate();

  const Normalization norm = fit_normalization(dataset.batch);
  apply_normalization(dataset.batch, norm);

  StImputeModel model = StImputeModel::init(model_config, train_config.seed);
  for (std::size_t j = 0; j < norm.mean.size(); ++j) {
    model.norm_mean.at(0, j) = norm.mean[j];
    model.norm_std.at(0, j) = norm.std_dev[j];
  }

  TrainResult result = train(model, dataset.batch, train_config);
  save_checkpoint(model, checkpoint);

  const std::string trace_path = checkpoint + ".trace.csv";
  write_loss_trace_csv(result.trace, trace_path);
  std::cout << "trained " << result.trace.size() << " epochs (best epoch "
            << result.best_epoch << "); checkpoint " << checkpoint
            << ", loss trace " << trace_path << "\n";
  return 0;
}

int run_impute(const std::string& checkpoint, const std::string& input,
               const std::string& output) {
  StImputeModel model = load_checkpoint(checkpoint);
  Dataset dataset = load_csv(input);
  if (dataset.n_features != model.config.n_features)
    throw DataError("impute: checkpoint expects " +
                    std::to_string(model.config.n_features) +
                    " features, input has " + std::to_string(dataset.n_features));

  Dataset completed = dataset;
  for (std::size_t i = 0; i < dataset.batch.series.size(); ++i) {
    const Series& raw = dataset.batch.series[i];
    // run the model in the normalized space it was trained in
    Series normed = raw;
    Tensor values(raw.values.rows(), raw.values.cols(), 0.0);
    for (std::size_t r = 0; r < raw.values.rows(); ++r)
      for (std::size_t j = 0; j < raw.values.cols(); ++j)
        if (raw.natural_missing(r, j) == 0.0)
          values.at(r, j) = (raw.values(r, j) - model.norm_mean(0, j)) /
                            model.norm_std(0, j);
    normed.values = values;

    const Tensor filled = impute(normed, model);
    Series& out = completed.batch.series[i];
    Tensor out_values(raw.values.rows(), raw.values.cols(), 0.0);
    for (std::size_t r = 0; r < raw.values.rows(); ++r)
      for (std::size_t j = 0; j < raw.values.cols(); ++j) {
        if (raw.natural_missing(r, j) == 0.0)
          out_values.at(r, j) = raw.values(r, j); // observed cells bit-exact
        else
          out_values.at(r, j) =
              filled(r, j) * model.norm_std(0, j) + model.norm_mean(0, j);
      }
    out.values = out_values;
    out.natural_missing = Tensor(raw.values.rows(), raw.values.cols(), 0.0);
    out.mim_mask = Tensor(raw.values.rows(), raw.values.cols(), 0.0);
    refresh_observed_mask(out);
  }
  save_csv(completed, output);
  std::cout << "wrote " << output << "\n";
  return 0;
}

int run_evaluate(const std::string& spec_path, const std::string& out_dir) {
  ExperimentSpec spec = load_experiment_spec(spec_path);
  spec.out_dir = out_dir;
  std::filesystem::create_directories(out_dir);
  ImputationReport report = run_experiment(spec);
  std::cout << report.to_csv();
  std::cout << "report written to " << out_dir << "/report.csv\n";
  return 0;
}

int run_gradcheck(const std::string& attention) {
  SyntheticSpec spec;
  spec.n_series = 2;
  spec.length = 8;
  spec.n_features = 2;
  spec.seed = 5;
  spec.task = TaskKind::kClassification;
  TimeSeriesBatch batch = generate_synthetic(spec).batch;

  ModelConfig config;
  config.n_layers = 1;
  config.n_heads = 2;
  config.d_model = 16;
  config.dropout = 0.0;
  config.attention_kind =
      attention == "softmax" ? AttentionKind::kSoftmax : AttentionKind::kSparse;
  config.n_features = 2;
  config.task = TaskKind::kClassification;

  StImputeModel model = StImputeModel::init(config, 3);
  const auto entries = gradient_check(model, batch);

  double worst = 0.0;
  for (const auto& e : entries) {
    std::cout << e.name << " max relative error " << e.max_rel_error << "\n";
    worst = std::max(worst, e.max_rel_error);
  }
  std::cout << "worst relative error " << worst << " (threshold 1e-4)\n";
  if (worst >= 1e-4)
    throw NumericalError("gradcheck: gradients diverge from finite differences");
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"sparse-attention transformer for time-series imputation"};
  app.require_subcommand(1);

  // simulate-missing
  auto* sim = app.add_subcommand("simulate-missing",
                                 "corrupt a dataset with a missingness pattern");
  std::string sim_input, sim_pattern = "mcar", sim_output, sim_holdout;
  double sim_rate = 0.5;
  std::uint64_t sim_seed = 0;
  sim->add_option("--input", sim_input, "input CSV")->required();
  sim->add_option("--pattern", sim_pattern, "mcar, fixed-block or variable-block")
      ->check(CLI::IsMember({"mcar", "fixed-block", "variable-block"}));
  sim->add_option("--rate", sim_rate, "target held-out fraction")->required();
  sim->add_option("--seed", sim_seed, "random seed");
  sim->add_option("--output", sim_output, "corrupted CSV")->required();
  sim->add_option("--holdout", sim_holdout, "held-out ground-truth CSV")->required();

  // train
  auto* tr = app.add_subcommand("train", "train an imputation model");
  std::string tr_input, tr_config, tr_checkpoint;
  double tr_labeled = 1.0;
  tr->add_option("--input", tr_input, "training CSV")->required();
  tr->add_option("--config", tr_config, "key = value config file");
  tr->add_option("--labeled-fraction", tr_labeled, "fraction of labels exposed");
  tr->add_option("--checkpoint", tr_checkpoint, "checkpoint output path")->required();

  // impute
  auto* im = app.add_subcommand("impute", "fill missing values in a dataset");
  std::string im_checkpoint, im_input, im_output;
  im->add_option("--checkpoint", im_checkpoint, "trained checkpoint")->required();
  im->add_option("--input", im_input, "CSV with missing cells")->required();
  im->add_option("--output", im_output, "completed CSV")->required();

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "run a full evaluation sweep");
  std::string ev_spec, ev_out_dir = ".";
  ev->add_option("--spec", ev_spec, "experiment spec file")->required();
  ev->add_option("--out-dir", ev_out_dir, "output directory");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck",
                                "compare tape gradients with finite differences");
  std::string gc_attention = "sparse";
  gc->add_option("--attention", gc_attention, "attention kind")
      ->check(CLI::IsMember({"sparse", "softmax"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (sim->parsed())
      return run_simulate_missing(sim_input, sim_pattern, sim_rate, sim_seed,
                                  sim_output, sim_holdout);
    if (tr->parsed()) return run_train(tr_input, tr_config, tr_labeled, tr_checkpoint);
    if (im->parsed()) return run_impute(im_checkpoint, im_input, im_output);
    if (ev->parsed()) return run_evaluate(ev_spec, ev_out_dir);
    if (gc->parsed()) return run_gradcheck(gc_attention);
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const ContractError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
