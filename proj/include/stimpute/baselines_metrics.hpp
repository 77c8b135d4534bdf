#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stimpute/batch.hpp"

namespace stimpute {

// Classical imputation baselines. Each returns a completed copy of the
// values; entries flagged in natural_missing are filled, observed entries
// are passed through untouched. `fallback` fills channels with no
// observations at all (callers pass a train-split global mean; NaN means
// "use the series-wide observed mean, else 0").
Tensor impute_mean(const Series& s, double fallback = std::nan(""));
Tensor impute_last(const Series& s, double fallback = std::nan(""));
Tensor impute_linear(const Series& s, double fallback = std::nan(""));

// Masked error metrics over entries where mask is nonzero.
double rmse(const Tensor& pred, const Tensor& truth, const Tensor& mask);
double mae(const Tensor& pred, const Tensor& truth, const Tensor& mask);

// AUC-ROC via the Mann-Whitney rank statistic with average ranks for ties.
// Both classes must be present.
double auc_roc(std::span<const double> scores, std::span<const int> labels);

// PR-AUC as average precision, integrating stepwise over recall with tied
// scores handled as one group.
double pr_auc(std::span<const double> scores, std::span<const int> labels);

// One scored cell of an experiment grid.
struct ReportRow {
  std::string method;
  std::string pattern;
  double rate = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
  std::size_t scored = 0; // held-out entries that were scored
  std::optional<double> auc_roc;
  std::optional<double> pr_auc;
  std::optional<double> downstream_rmse;
};

struct ImputationReport {
  std::vector<ReportRow> rows;

  std::string to_csv() const;
  void write_csv(const std::string& path) const;
};

} // namespace stimpute
