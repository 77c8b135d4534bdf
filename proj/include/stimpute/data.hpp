#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "stimpute/batch.hpp"
#include "stimpute/model.hpp"
#include "stimpute/training.hpp"

namespace stimpute {

struct Dataset {
  TimeSeriesBatch batch;
  std::size_t n_features = 0;
  TaskKind task = TaskKind::kNone;
  std::vector<std::string> series_ids; // parallel to batch.series
};

// Long CSV layout, one row per timestep:
//   series_id,t,<feature...>[,label]
// Empty cells or a NaN token mark missing values; the label column, when
// present, repeats the per-series target on each row.
Dataset load_csv(const std::string& path);

// Lossless inverse of load_csv, including missingness flags.
void save_csv(const Dataset& dataset, const std::string& path);

struct SyntheticSpec {
  std::size_t n_series = 200;
  std::size_t length = 48;
  std::size_t n_features = 2;
  std::uint64_t seed = 7;
  TaskKind task = TaskKind::kNone;
};

// Sums of random-phase sinusoids plus sigma=0.1 noise. Classification labels
// come from the frequency band (2 classes); the regression target is the
// mean amplitude.
Dataset generate_synthetic(const SyntheticSpec& spec);

struct Normalization {
  std::vector<double> mean;
  std::vector<double> std_dev;
  std::vector<bool> constant; // flagged channels where std was 0
};

// Per-channel z-score stats from observed values of the given (train) split
// only. Constant channels get std 1 and a flag.
Normalization fit_normalization(const TimeSeriesBatch& train);
void apply_normalization(TimeSeriesBatch& batch, const Normalization& norm);

// Deterministic train/test split by seeded shuffle.
void split_train_test(const Dataset& dataset, double test_fraction,
                      std::uint64_t seed, TimeSeriesBatch& train,
                      TimeSeriesBatch& test);

// Flat `key = value` config text; '#' starts a comment. Unknown keys are
// errors.
std::map<std::string, std::string> parse_config_file(const std::string& path);

// Applies recognized keys from a parsed config onto the model/train configs,
// erasing them from the map; leftover keys are the caller's to validate.
void apply_model_config_keys(std::map<std::string, std::string>& kv, ModelConfig& config);
void apply_train_config_keys(std::map<std::string, std::string>& kv, TrainConfig& config);

// Rejects any keys still left in the map.
void reject_unknown_keys(const std::map<std::string, std::string>& kv,
                         const std::string& context);

} // namespace stimpute
