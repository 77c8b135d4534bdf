#include "stimpute/model.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>

#include "stimpute/errors.hpp"

namespace stimpute {

void refresh_observed_mask(Series& s) {
  const std::size_t n = s.values.rows(), f = s.values.cols();
  if (!s.mim_mask.valid()) s.mim_mask = Tensor(n, f, 0.0);
  s.observed_mask = Tensor(n, f, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < f; ++j) {
      const bool nat = s.natural_missing(i, j) != 0.0;
      const bool mim = s.mim_mask(i, j) != 0.0;
      if (nat && mim)
        throw ContractError("Series: mim_mask overlaps natural_missing at (" +
                            std::to_string(i) + "," + std::to_string(j) + ")");
      s.observed_mask.at(i, j) = (!nat && !mim) ? 1.0 : 0.0;
    }
  }
}

void ModelConfig::validate() const {
  if (n_layers == 0) throw ContractError("ModelConfig: n_layers must be >= 1");
  if (n_heads == 0 || d_model % n_heads != 0)
    throw ContractError("ModelConfig: n_heads must divide d_model");
  if (d_model % 2 != 0) throw ContractError("ModelConfig: d_model must be even");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ContractError("ModelConfig: dropout must be in [0, 1)");
  if (lambda >= 1.0) throw ContractError("ModelConfig: lambda must be < 1");
  if (n_features == 0) throw ContractError("ModelConfig: n_features must be >= 1");
  if (task == TaskKind::kClassification && n_classes < 2)
    throw ContractError("ModelConfig: classification needs >= 2 classes");
}

namespace {

Tensor init_weight(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::uniform_real_distribution<double> unif(-bound, bound);
  std::vector<double> data(rows * cols);
  for (auto& v : data) v = unif(rng);
  return Tensor::from_rows(rows, cols, std::move(data), /*requires_grad=*/true);
}

Tensor init_bias(std::size_t cols) {
  return Tensor(1, cols, 0.0, /*requires_grad=*/true);
}

Tensor init_const_row(std::size_t cols, double value) {
  return Tensor(1, cols, value, /*requires_grad=*/true);
}

} // namespace

StImputeModel StImputeModel::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  StImputeModel model;
  model.config = config;

  const std::size_t d = config.d_model;
  const std::size_t dk = d / config.n_heads;
  const std::size_t f = config.n_features;

  model.w_e = init_weight(2 * f, d, rng);
  model.b_e = init_bias(d);

  for (std::size_t l = 0; l < config.n_layers; ++l) {
    AttentionBlockParams p;
    for (std::size_t h = 0; h < config.n_heads; ++h) {
      p.w_q.push_back(init_weight(d, dk, rng));
      p.w_k.push_back(init_weight(d, dk, rng));
      p.w_v.push_back(init_weight(d, dk, rng));
    }
    p.w_o = init_weight(config.n_heads * dk, d, rng);
    p.ffn_w1 = init_weight(d, 4 * d, rng);
    p.ffn_b1 = init_bias(4 * d);
    p.ffn_w2 = init_weight(4 * d, d, rng);
    p.ffn_b2 = init_bias(d);
    p.ln1_gamma = init_const_row(d, 1.0);
    p.ln1_beta = init_bias(d);
    p.ln2_gamma = init_const_row(d, 1.0);
    p.ln2_beta = init_bias(d);
    model.layers.push_back(std::move(p));
  }

  model.w_r = init_weight(d, f, rng);
  model.b_r = init_bias(f);

  model.norm_mean = Tensor(1, f, 0.0);
  model.norm_std = Tensor(1, f, 1.0);

  if (config.task != TaskKind::kNone) {
    const std::size_t out =
        config.task == TaskKind::kClassification ? config.n_classes : 1;
    model.w_c = init_weight(d, out, rng);
    model.b_c = init_bias(out);
  }
  return model;
}

std::vector<std::pair<std::string, Tensor>> StImputeModel::parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embed.w", w_e);
  out.emplace_back("embed.b", b_e);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& p = layers[l];
    const std::string base = "layer" + std::to_string(l) + ".";
    for (std::size_t h = 0; h < p.heads(); ++h) {
      const std::string hh = std::to_string(h);
      out.emplace_back(base + "wq" + hh, p.w_q[h]);
      out.emplace_back(base + "wk" + hh, p.w_k[h]);
      out.emplace_back(base + "wv" + hh, p.w_v[h]);
    }
    out.emplace_back(base + "wo", p.w_o);
    out.emplace_back(base + "ffn.w1", p.ffn_w1);
    out.emplace_back(base + "ffn.b1", p.ffn_b1);
    out.emplace_back(base + "ffn.w2", p.ffn_w2);
    out.emplace_back(base + "ffn.b2", p.ffn_b2);
    out.emplace_back(base + "ln1.gamma", p.ln1_gamma);
    out.emplace_back(base + "ln1.beta", p.ln1_beta);
    out.emplace_back(base + "ln2.gamma", p.ln2_gamma);
    out.emplace_back(base + "ln2.beta", p.ln2_beta);
  }
  out.emplace_back("recon.w", w_r);
  out.emplace_back("recon.b", b_r);
  if (config.task != TaskKind::kNone) {
    out.emplace_back("task.w", w_c);
    out.emplace_back("task.b", b_c);
  }
  return out;
}

void StImputeModel::zero_grads() {
  for (auto& [name, t] : parameters()) {
    (void)name;
    Tensor copy = t;
    copy.zero_grad();
  }
}

Tensor embed_input(const Tensor& values, const Tensor& missing_mask,
                   const StImputeModel& model) {
  if (values.rows() != missing_mask.rows() || values.cols() != missing_mask.cols())
    throw ContractError("embed_input: values/mask shape mismatch");
  if (values.cols() != model.config.n_features)
    throw ContractError("embed_input: expected " +
                        std::to_string(model.config.n_features) + " features, got " +
                        std::to_string(values.cols()));

  Tensor joined = ops::concat_cols({values, missing_mask});
  Tensor projected = ops::relu(
      ops::add_row_broadcast(ops::matmul(joined, model.w_e), model.b_e));
  Tensor pe = positional_encoding(values.rows(), model.config.d_model);
  return ops::add(projected, pe);
}

ForwardResult forward_series(const StImputeModel& model, const Tensor& values,
                             const Tensor& input_missing, bool training,
                             std::uint64_t dropout_seed,
                             std::vector<Tensor>* attn_out) {
  const std::size_t n = values.rows();
  Tensor x = embed_input(values, input_missing, model);
  Tensor mask = model.config.use_diagonal_mask ? diagonal_mask(n) : no_mask(n);

  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    x = encoder_layer(x, model.layers[l], mask, model.config.attention_kind,
                      model.config.lambda, model.config.dropout,
                      dropout_seed * 1000003ULL + l, training, attn_out);
  }

  ForwardResult result;
  result.reconstruction =
      ops::add_row_broadcast(ops::matmul(x, model.w_r), model.b_r);
  if (model.config.task != TaskKind::kNone) {
    Tensor pooled = ops::mean_rows(x);
    result.task_output =
        ops::add_row_broadcast(ops::matmul(pooled, model.w_c), model.b_c);
  }
  return result;
}

Tensor impute(const Series& series, const StImputeModel& model) {
  const std::size_t n = series.values.rows(), f = series.values.cols();

  // eval-time input: zero at naturally missing positions, no MIM mask
  Tensor input(n, f, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j)
      if (series.natural_missing(i, j) == 0.0) input.at(i, j) = series.values(i, j);

  ForwardResult fwd =
      forward_series(model, input, series.natural_missing, /*training=*/false);

  Tensor out(n, f, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j)
      out.at(i, j) = series.natural_missing(i, j) != 0.0
                         ? fwd.reconstruction(i, j)
                         : series.values(i, j);
  return out;
}

namespace {

constexpr int kCheckpointVersion = 1;

std::string task_name(TaskKind task) {
  switch (task) {
    case TaskKind::kNone: return "none";
    case TaskKind::kClassification: return "classification";
    case TaskKind::kRegression: return "regression";
  }
  return "none";
}

TaskKind task_from_name(const std::string& name) {
  if (name == "none") return TaskKind::kNone;
  if (name == "classification") return TaskKind::kClassification;
  if (name == "regression") return TaskKind::kRegression;
  throw DataError("checkpoint: unknown task '" + name + "'");
}

} // namespace

void save_checkpoint(const StImputeModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("save_checkpoint: cannot open " + path);
  out << std::setprecision(17);

  const auto& c = model.config;
  out << "stimpute-checkpoint " << kCheckpointVersion << "\n";
  out << "n_layers " << c.n_layers << "\n";
  out << "n_heads " << c.n_heads << "\n";
  out << "d_model " << c.d_model << "\n";
  out << "dropout " << c.dropout << "\n";
  out << "lambda " << c.lambda << "\n";
  out << "attention_kind "
      << (c.attention_kind == AttentionKind::kSparse ? "sparse" : "softmax") << "\n";
  out << "use_diagonal_mask " << (c.use_diagonal_mask ? 1 : 0) << "\n";
  out << "n_features " << c.n_features << "\n";
  out << "task " << task_name(c.task) << "\n";
  out << "n_classes " << c.n_classes << "\n";

  auto params = model.parameters();
  params.emplace_back("norm.mean", model.norm_mean);
  params.emplace_back("norm.std", model.norm_std);
  out << "params " << params.size() << "\n";
  for (const auto& [name, t] : params) {
    out << name << " " << t.rows() << " " << t.cols() << "\n";
    const auto vals = t.values();
    for (std::size_t i = 0; i < vals.size(); ++i)
      out << vals[i] << (i + 1 == vals.size() ? '\n' : ' ');
  }
  if (!out) throw DataError("save_checkpoint: write failed for " + path);
}

StImputeModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_checkpoint: cannot open " + path);

  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "stimpute-checkpoint" || version != kCheckpointVersion)
    throw DataError("load_checkpoint: bad header in " + path);

  ModelConfig c;
  std::string key;
  std::size_t n_params = 0;
  while (in >> key) {
    if (key == "params") {
      in >> n_params;
      break;
    }
    std::string value;
    in >> value;
    if (key == "n_layers") c.n_layers = std::stoul(value);
    else if (key == "n_heads") c.n_heads = std::stoul(value);
    else if (key == "d_model") c.d_model = std::stoul(value);
    else if (key == "dropout") c.dropout = std::stod(value);
    else if (key == "lambda") c.lambda = std::stod(value);
    else if (key == "attention_kind")
      c.attention_kind = value == "sparse" ? AttentionKind::kSparse : AttentionKind::kSoftmax;
    else if (key == "use_diagonal_mask") c.use_diagonal_mask = value == "1";
    else if (key == "n_features") c.n_features = std::stoul(value);
    else if (key == "task") c.task = task_from_name(value);
    else if (key == "n_classes") c.n_classes = std::stoul(value);
    else throw DataError("load_checkpoint: unknown key '" + key + "'");
  }

  StImputeModel model = StImputeModel::init(c, /*seed=*/0);
  auto params = model.parameters();
  params.emplace_back("norm.mean", model.norm_mean);
  params.emplace_back("norm.std", model.norm_std);
  if (params.size() != n_params)
    throw DataError("load_checkpoint: expected " + std::to_string(params.size()) +
                    " parameter tensors, file has " + std::to_string(n_params));

  std::map<std::string, Tensor> by_name(params.begin(), params.end());
  for (std::size_t p = 0; p < n_params; ++p) {
    std::string name;
    std::size_t rows = 0, cols = 0;
    if (!(in >> name >> rows >> cols))
      throw DataError("load_checkpoint: truncated parameter list");
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw DataError("load_checkpoint: unexpected parameter '" + name + "'");
    Tensor t = it->second;
    if (t.rows() != rows || t.cols() != cols)
      throw DataError("load_checkpoint: shape mismatch for '" + name + "'");
    auto& data = t.mutable_values();
    for (auto& v : data)
      if (!(in >> v))
        throw DataError("load_checkpoint: truncated values for '" + name + "'");
  }
  return model;
}

} // namespace stimpute
