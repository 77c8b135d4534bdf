#include "stimpute/baselines_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "stimpute/errors.hpp"

namespace stimpute {

namespace {

bool observed(const Series& s, std::size_t i, std::size_t j) {
  return s.natural_missing(i, j) == 0.0;
}

// Channel fallback chain: explicit fallback -> series-wide observed mean -> 0.
double channel_fallback(const Series& s, double fallback) {
  if (!std::isnan(fallback)) return fallback;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < s.values.rows(); ++i)
    for (std::size_t j = 0; j < s.values.cols(); ++j)
      if (observed(s, i, j)) {
        sum += s.values(i, j);
        ++count;
      }
  return count == 0 ? 0.0 : sum / static_cast<double>(count);
}

} // namespace

Tensor impute_mean(const Series& s, double fallback) {
  const std::size_t n = s.values.rows(), f = s.values.cols();
  Tensor out(n, f, 0.0);
  for (std::size_t j = 0; j < f; ++j) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (observed(s, i, j)) {
        sum += s.values(i, j);
        ++count;
      }
    const double fill = count > 0 ? sum / static_cast<double>(count)
                                  : channel_fallback(s, fallback);
    for (std::size_t i = 0; i < n; ++i)
      out.at(i, j) = observed(s, i, j) ? s.values(i, j) : fill;
  }
  return out;
}

Tensor impute_last(const Series& s, double fallback) {
  const std::size_t n = s.values.rows(), f = s.values.cols();
  Tensor out(n, f, 0.0);
  for (std::size_t j = 0; j < f; ++j) {
    // find the first observation for back-filling the leading gap
    std::ptrdiff_t first_obs = -1;
    for (std::size_t i = 0; i < n; ++i)
      if (observed(s, i, j)) {
        first_obs = static_cast<std::ptrdiff_t>(i);
        break;
      }
    if (first_obs < 0) {
      const double fill = channel_fallback(s, fallback);
      for (std::size_t i = 0; i < n; ++i) out.at(i, j) = fill;
      continue;
    }
    double last = s.values(static_cast<std::size_t>(first_obs), j);
    for (std::size_t i = 0; i < n; ++i) {
      if (observed(s, i, j)) last = s.values(i, j);
      out.at(i, j) = observed(s, i, j) ? s.values(i, j) : last;
    }
  }
  return out;
}

Tensor impute_linear(const Series& s, double fallback) {
  const std::size_t n = s.values.rows(), f = s.values.cols();
  Tensor out(n, f, 0.0);
  for (std::size_t j = 0; j < f; ++j) {
    std::vector<std::size_t> obs;
    for (std::size_t i = 0; i < n; ++i)
      if (observed(s, i, j)) obs.push_back(i);
    if (obs.empty()) {
      const double fill = channel_fallback(s, fallback);
      for (std::size_t i = 0; i < n; ++i) out.at(i, j) = fill;
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (observed(s, i, j)) {
        out.at(i, j) = s.values(i, j);
        continue;
      }
      // flanking observations; ends clamp to the nearest one
      auto right = std::lower_bound(obs.begin(), obs.end(), i);
      if (right == obs.begin()) {
        out.at(i, j) = s.values(obs.front(), j);
      } else if (right == obs.end()) {
        out.at(i, j) = s.values(obs.back(), j);
      } else {
        const std::size_t hi = *right;
        const std::size_t lo = *(right - 1);
        const double w = static_cast<double>(i - lo) / static_cast<double>(hi - lo);
        out.at(i, j) = (1.0 - w) * s.values(lo, j) + w * s.values(hi, j);
      }
    }
  }
  return out;
}

double rmse(const Tensor& pred, const Tensor& truth, const Tensor& mask) {
  double sum = 0.0, count = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double m = mask.values()[i];
    if (m == 0.0) continue;
    const double d = pred.values()[i] - truth.values()[i];
    sum += m * d * d;
    count += m;
  }
  if (count <= 0.0) throw ContractError("rmse: mask selects no entries");
  return std::sqrt(sum / count);
}

double mae(const Tensor& pred, const Tensor& truth, const Tensor& mask) {
  double sum = 0.0, count = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double m = mask.values()[i];
    if (m == 0.0) continue;
    sum += m * std::abs(pred.values()[i] - truth.values()[i]);
    count += m;
  }
  if (count <= 0.0) throw ContractError("mae: mask selects no entries");
  return sum / count;
}

namespace {

void check_two_classes(std::span<const int> labels) {
  bool pos = false, neg = false;
  for (int l : labels) (l != 0 ? pos : neg) = true;
  if (!pos || !neg)
    throw ContractError("ranking metric: both classes must be present");
}

} // namespace

double auc_roc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw ContractError("auc_roc: size mismatch");
  check_two_classes(labels);

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // average ranks for tied scores
  std::vector<double> rank(scores.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }

  double rank_sum = 0.0;
  double pos = 0.0;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (labels[k] != 0) {
      rank_sum += rank[k];
      pos += 1.0;
    }
  }
  const double neg = static_cast<double>(labels.size()) - pos;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double pr_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size())
    throw ContractError("pr_auc: size mismatch");
  check_two_classes(labels);

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  double total_pos = 0.0;
  for (int l : labels)
    if (l != 0) total_pos += 1.0;

  // average precision with tied scores processed as one group
  double tp = 0.0, seen = 0.0, ap = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    double group_pos = labels[order[i]] != 0 ? 1.0 : 0.0;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) {
      ++j;
      if (labels[order[j]] != 0) group_pos += 1.0;
    }
    const double group_size = static_cast<double>(j - i + 1);
    tp += group_pos;
    seen += group_size;
    const double precision = tp / seen;
    ap += precision * (group_pos / total_pos);
    i = j + 1;
  }
  return ap;
}

std::string ImputationReport::to_csv() const {
  std::ostringstream out;
  out << std::setprecision(17);
  out << "method,pattern,rate,rmse,mae,scored,auc_roc,pr_auc,downstream_rmse\n";
  for (const auto& r : rows) {
    out << r.method << ',' << r.pattern << ',' << r.rate << ',' << r.rmse << ','
        << r.mae << ',' << r.scored << ',';
    if (r.auc_roc) out << *r.auc_roc;
    out << ',';
    if (r.pr_auc) out << *r.pr_auc;
    out << ',';
    if (r.downstream_rmse) out << *r.downstream_rmse;
    out << '\n';
  }
  return out.str();
}

void ImputationReport::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw DataError("ImputationReport: cannot open " + path);
  out << to_csv();
  if (!out) throw DataError("ImputationReport: write failed for " + path);
}

} // namespace stimpute
