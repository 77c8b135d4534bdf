#include "stimpute/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <random>
#include <sstream>

#include "stimpute/errors.hpp"

namespace stimpute {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool is_missing_token(const std::string& cell) {
  const std::string t = trim(cell);
  return t.empty() || t == "NaN" || t == "nan" || t == "NA";
}

double parse_number(const std::string& cell, std::size_t line_no,
                    const std::string& what) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(trim(cell), &pos);
    if (pos != trim(cell).size()) throw std::invalid_argument("trailing chars");
    return v;
  } catch (const std::exception&) {
    throw DataError("line " + std::to_string(line_no) + ": non-numeric " + what +
                    " '" + cell + "'");
  }
}

struct RawRow {
  double t = 0.0;
  std::vector<double> features;  // NaN marks missing
  std::optional<double> label;
  std::size_t line_no = 0;
};

} // namespace

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_csv: cannot open " + path);

  std::string line;
  if (!std::getline(in, line)) throw DataError("load_csv: empty file " + path);
  const auto header = split_line(trim(line));
  if (header.size() < 3 || trim(header[0]) != "series_id" || trim(header[1]) != "t")
    throw DataError("load_csv: header must be series_id,t,<feature...>[,label]");

  const bool has_label = trim(header.back()) == "label";
  const std::size_t n_features = header.size() - 2 - (has_label ? 1 : 0);
  if (n_features == 0) throw DataError("load_csv: no feature columns");

  std::vector<std::string> id_order;
  std::map<std::string, std::vector<RawRow>> rows_by_id;

  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size())
      throw DataError("load_csv: line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " cells, got " +
                      std::to_string(cells.size()));

    const std::string id = trim(cells[0]);
    RawRow row;
    row.line_no = line_no;
    row.t = parse_number(cells[1], line_no, "timestamp");
    for (std::size_t j = 0; j < n_features; ++j) {
      const auto& cell = cells[2 + j];
      row.features.push_back(is_missing_token(cell)
                                 ? std::numeric_limits<double>::quiet_NaN()
                                 : parse_number(cell, line_no, "feature"));
    }
    if (has_label && !is_missing_token(cells.back()))
      row.label = parse_number(cells.back(), line_no, "label");

    if (rows_by_id.find(id) == rows_by_id.end()) id_order.push_back(id);
    rows_by_id[id].push_back(std::move(row));
  }

  Dataset dataset;
  dataset.n_features = n_features;
  for (const auto& id : id_order) {
    auto& rows = rows_by_id[id];
    std::stable_sort(rows.begin(), rows.end(),
                     [](const RawRow& a, const RawRow& b) { return a.t < b.t; });
    for (std::size_t i = 1; i < rows.size(); ++i)
      if (rows[i].t == rows[i - 1].t)
        throw DataError("load_csv: line " + std::to_string(rows[i].line_no) +
                        ": duplicate (series_id, t) = (" + id + ", " +
                        std::to_string(rows[i].t) + ")");

    Series s;
    const std::size_t n = rows.size();
    s.values = Tensor(n, n_features, 0.0);
    s.natural_missing = Tensor(n, n_features, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n_features; ++j) {
        if (std::isnan(rows[i].features[j]))
          s.natural_missing.at(i, j) = 1.0;
        else
          s.values.at(i, j) = rows[i].features[j];
      }
      if (rows[i].label.has_value()) s.label = rows[i].label;
    }
    refresh_observed_mask(s);
    dataset.batch.series.push_back(std::move(s));
    dataset.series_ids.push_back(id);
  }

  if (has_label) {
    // integral labels in a small range read as classes, anything else as a
    // regression target
    bool any_label = false, integral = true;
    double max_label = 0.0;
    for (const auto& s : dataset.batch.series) {
      if (!s.label) continue;
      any_label = true;
      if (*s.label != std::floor(*s.label) || *s.label < 0.0) integral = false;
      max_label = std::max(max_label, *s.label);
    }
    if (any_label)
      dataset.task = (integral && max_label < 32.0) ? TaskKind::kClassification
                                                    : TaskKind::kRegression;
  }
  return dataset;
}

void save_csv(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("save_csv: cannot open " + path);
  out << std::setprecision(17);

  bool any_label = false;
  for (const auto& s : dataset.batch.series)
    if (s.label) any_label = true;

  out << "series_id,t";
  for (std::size_t j = 0; j < dataset.n_features; ++j) out << ",f" << j;
  if (any_label) out << ",label";
  out << "\n";

  for (std::size_t k = 0; k < dataset.batch.series.size(); ++k) {
    const auto& s = dataset.batch.series[k];
    const std::string id = k < dataset.series_ids.size() ? dataset.series_ids[k]
                                                         : "s" + std::to_string(k);
    for (std::size_t i = 0; i < s.values.rows(); ++i) {
      out << id << ',' << i;
      for (std::size_t j = 0; j < s.values.cols(); ++j) {
        out << ',';
        if (s.natural_missing(i, j) == 0.0) out << s.values(i, j);
      }
      if (any_label) {
        out << ',';
        if (s.label) out << *s.label;
      }
      out << '\n';
    }
  }
  if (!out) throw DataError("save_csv: write failed for " + path);
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_series == 0 || spec.length < 2 || spec.n_features == 0)
    throw ContractError("generate_synthetic: degenerate spec");

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.1);

  Dataset dataset;
  dataset.n_features = spec.n_features;
  dataset.task = spec.task;

  const double two_pi = 2.0 * std::acos(-1.0);
  for (std::size_t k = 0; k < spec.n_series; ++k) {
    const int cls = unif(rng) < 0.5 ? 0 : 1;
    // class-dependent frequency bands, in cycles per series
    const double f1 = cls == 0 ? 1.0 + unif(rng) : 3.0 + unif(rng);
    const double f2 = f1 * (1.5 + 0.5 * unif(rng));
    const double a1 = 0.8 + 0.4 * unif(rng);
    const double a2 = 0.4 + 0.3 * unif(rng);

    Series s;
    s.values = Tensor(spec.length, spec.n_features, 0.0);
    s.natural_missing = Tensor(spec.length, spec.n_features, 0.0);
    for (std::size_t j = 0; j < spec.n_features; ++j) {
      const double phase1 = two_pi * unif(rng);
      const double phase2 = two_pi * unif(rng);
      for (std::size_t t = 0; t < spec.length; ++t) {
        const double x = static_cast<double>(t) / static_cast<double>(spec.length);
        s.values.at(t, j) = a1 * std::sin(two_pi * f1 * x + phase1) +
                            a2 * std::sin(two_pi * f2 * x + phase2) + noise(rng);
      }
    }
    refresh_observed_mask(s);
    if (spec.task == TaskKind::kClassification)
      s.label = static_cast<double>(cls);
    else if (spec.task == TaskKind::kRegression)
      s.label = (a1 + a2) / 2.0;
    dataset.batch.series.push_back(std::move(s));
    dataset.series_ids.push_back("s" + std::to_string(k));
  }
  return dataset;
}

Normalization fit_normalization(const TimeSeriesBatch& train) {
  if (train.series.empty())
    throw ContractError("fit_normalization: empty training split");
  const std::size_t f = train.series[0].values.cols();

  Normalization norm;
  norm.mean.assign(f, 0.0);
  norm.std_dev.assign(f, 1.0);
  norm.constant.assign(f, false);

  for (std::size_t j = 0; j < f; ++j) {
    double sum = 0.0, sq = 0.0;
    std::size_t count = 0;
    for (const auto& s : train.series) {
      for (std::size_t i = 0; i < s.values.rows(); ++i) {
        if (s.natural_missing(i, j) != 0.0) continue;
        sum += s.values(i, j);
        sq += s.values(i, j) * s.values(i, j);
        ++count;
      }
    }
    if (count == 0) {
      norm.constant[j] = true;
      continue;
    }
    norm.mean[j] = sum / static_cast<double>(count);
    const double var = sq / static_cast<double>(count) - norm.mean[j] * norm.mean[j];
    if (var <= 0.0) {
      norm.constant[j] = true;
      norm.std_dev[j] = 1.0;
    } else {
      norm.std_dev[j] = std::sqrt(var);
    }
  }
  return norm;
}

void apply_normalization(TimeSeriesBatch& batch, const Normalization& norm) {
  for (auto& s : batch.series) {
    // series copies can share value nodes; normalize a private copy
    Tensor values(s.values.rows(), s.values.cols(), 0.0);
    for (std::size_t i = 0; i < s.values.rows(); ++i)
      for (std::size_t j = 0; j < s.values.cols(); ++j)
        if (s.natural_missing(i, j) == 0.0)
          values.at(i, j) = (s.values(i, j) - norm.mean[j]) / norm.std_dev[j];
    s.values = values;
  }
}

void split_train_test(const Dataset& dataset, double test_fraction,
                      std::uint64_t seed, TimeSeriesBatch& train,
                      TimeSeriesBatch& test) {
  if (test_fraction <= 0.0 || test_fraction >= 1.0)
    throw ContractError("split_train_test: test_fraction must be in (0, 1)");
  std::vector<std::size_t> order(dataset.batch.series.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng() % i]);

  const std::size_t n_test = std::max<std::size_t>(
      1, static_cast<std::size_t>(test_fraction * static_cast<double>(order.size())));
  train.series.clear();
  test.series.clear();
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i < order.size() - n_test)
      train.series.push_back(dataset.batch.series[order[i]]);
    else
      test.series.push_back(dataset.batch.series[order[i]]);
  }
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("config: cannot open " + path);

  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw DataError("config: line " + std::to_string(line_no) +
                      ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw DataError("config: line " + std::to_string(line_no) +
                      ": empty key or value");
    if (kv.count(key))
      throw DataError("config: line " + std::to_string(line_no) +
                      ": duplicate key '" + key + "'");
    kv[key] = value;
  }
  return kv;
}

namespace {

template <typename F>
void take(std::map<std::string, std::string>& kv, const std::string& key, F&& apply) {
  auto it = kv.find(key);
  if (it == kv.end()) return;
  try {
    apply(it->second);
  } catch (const DataError&) {
    throw;
  } catch (const std::exception&) {
    throw DataError("config: bad value for '" + key + "': " + it->second);
  }
  kv.erase(it);
}

} // namespace

void apply_model_config_keys(std::map<std::string, std::string>& kv,
                             ModelConfig& config) {
  take(kv, "n_layers", [&](const std::string& v) { config.n_layers = std::stoul(v); });
  take(kv, "n_heads", [&](const std::string& v) { config.n_heads = std::stoul(v); });
  take(kv, "d_model", [&](const std::string& v) { config.d_model = std::stoul(v); });
  take(kv, "dropout", [&](const std::string& v) { config.dropout = std::stod(v); });
  take(kv, "lambda", [&](const std::string& v) { config.lambda = std::stod(v); });
  take(kv, "attention_kind", [&](const std::string& v) {
    if (v == "sparse") config.attention_kind = AttentionKind::kSparse;
    else if (v == "softmax") config.attention_kind = AttentionKind::kSoftmax;
    else throw DataError("config: attention_kind must be sparse or softmax");
  });
  take(kv, "use_diagonal_mask",
       [&](const std::string& v) { config.use_diagonal_mask = v == "1" || v == "true"; });
  take(kv, "n_classes", [&](const std::string& v) { config.n_classes = std::stoul(v); });
  take(kv, "task", [&](const std::string& v) {
    if (v == "none") config.task = TaskKind::kNone;
    else if (v == "classification") config.task = TaskKind::kClassification;
    else if (v == "regression") config.task = TaskKind::kRegression;
    else throw DataError("config: task must be none, classification or regression");
  });
}

void apply_train_config_keys(std::map<std::string, std::string>& kv,
                             TrainConfig& config) {
  take(kv, "learning_rate",
       [&](const std::string& v) { config.learning_rate = std::stod(v); });
  take(kv, "beta1", [&](const std::string& v) { config.beta1 = std::stod(v); });
  take(kv, "beta2", [&](const std::string& v) { config.beta2 = std::stod(v); });
  take(kv, "epsilon", [&](const std::string& v) { config.epsilon = std::stod(v); });
  take(kv, "epochs", [&](const std::string& v) { config.epochs = std::stoul(v); });
  take(kv, "batch_size",
       [&](const std::string& v) { config.batch_size = std::stoul(v); });
  take(kv, "mim_rate", [&](const std::string& v) { config.mim_rate = std::stod(v); });
  take(kv, "seed", [&](const std::string& v) { config.seed = std::stoull(v); });
  take(kv, "labeled_fraction",
       [&](const std::string& v) { config.labeled_fraction = std::stod(v); });
  take(kv, "clip_norm", [&](const std::string& v) { config.clip_norm = std::stod(v); });
  take(kv, "validation_fraction",
       [&](const std::string& v) { config.validation_fraction = std::stod(v); });
  take(kv, "patience", [&](const std::string& v) { config.patience = std::stoul(v); });
  take(kv, "early_stopping",
       [&](const std::string& v) { config.early_stopping = v == "1" || v == "true"; });
}

void reject_unknown_keys(const std::map<std::string, std::string>& kv,
                         const std::string& context) {
  if (kv.empty()) return;
  std::string keys;
  for (const auto& [k, v] : kv) {
    (void)v;
    if (!keys.empty()) keys += ", ";
    keys += k;
  }
  throw DataError(context + ": unknown keys: " + keys);
}

} // namespace stimpute
