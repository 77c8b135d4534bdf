#include "stimpute/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>
#include <utility>

#include "stimpute/kernels.hpp"
#include "stimpute/sparse_activation.hpp"

namespace stimpute {

namespace {

std::atomic<std::uint64_t> g_next_node_id{1};

std::shared_ptr<TensorNode> make_node(std::size_t rows, std::size_t cols,
                                      std::vector<double> data) {
  auto node = std::make_shared<TensorNode>();
  node->rows = rows;
  node->cols = cols;
  node->data = std::move(data);
  node->id = g_next_node_id.fetch_add(1, std::memory_order_relaxed);
  return node;
}

std::string shape_str(const TensorNode& n) {
  return "[" + std::to_string(n.rows) + " x " + std::to_string(n.cols) + "]";
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ContractError(std::string(op) + ": shape mismatch " +
                        shape_str(*a.node()) + " vs " + shape_str(*b.node()));
}

void check_finite(std::span<const double> v, const char* op) {
  for (double x : v)
    if (!std::isfinite(x))
      throw NumericalError(std::string(op) + ": non-finite value in output");
}

Tensor make_result(std::size_t rows, std::size_t cols, std::vector<double> data,
                   std::vector<std::shared_ptr<TensorNode>> parents,
                   std::function<void(TensorNode&)> backward) {
  auto node = make_node(rows, cols, std::move(data));
  bool needs_grad = false;
  for (const auto& p : parents)
    if (p->requires_grad) needs_grad = true;
  if (needs_grad) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward_fn = std::move(backward);
  }
  return Tensor(node);
}

bool is_masked(double mask_value) { return mask_value <= kMaskedScore / 2; }

} // namespace

void TensorNode::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill, bool requires_grad) {
  node_ = make_node(rows, cols, std::vector<double>(rows * cols, fill));
  node_->requires_grad = requires_grad;
}

Tensor Tensor::from_rows(std::size_t rows, std::size_t cols,
                         std::vector<double> values, bool requires_grad) {
  if (values.size() != rows * cols)
    throw ContractError("Tensor::from_rows: " + std::to_string(values.size()) +
                        " values for shape [" + std::to_string(rows) + " x " +
                        std::to_string(cols) + "]");
  auto node = make_node(rows, cols, std::move(values));
  node->requires_grad = requires_grad;
  return Tensor(node);
}

Tensor Tensor::row(std::initializer_list<double> values) {
  return from_rows(1, values.size(), std::vector<double>(values));
}

Tensor Tensor::scalar(double value) { return from_rows(1, 1, {value}); }

double Tensor::operator()(std::size_t i, std::size_t j) const {
  return node_->data[i * node_->cols + j];
}

double& Tensor::at(std::size_t i, std::size_t j) {
  return node_->data[i * node_->cols + j];
}

std::span<const double> Tensor::gradient() const {
  if (node_->grad.empty())
    throw ContractError("Tensor::gradient: no gradient accumulated");
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

double Tensor::item() const {
  if (size() != 1)
    throw ContractError("Tensor::item: tensor is not scalar, shape " +
                        shape_str(*node_));
  return node_->data[0];
}

namespace ops {

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw ContractError("matmul: inner dimensions disagree, " +
                        shape_str(*a.node()) + " x " + shape_str(*b.node()));
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n);
  kernels::matmul(a.values().data(), b.values().data(), out.data(), m, k, n);

  auto an = a.node(), bn = b.node();
  return make_result(m, n, std::move(out), {an, bn},
                     [an, bn, m, k, n](TensorNode& node) {
                       if (an->requires_grad) {
                         an->ensure_grad();
                         std::vector<double> tmp(m * k);
                         kernels::matmul_bt(node.grad.data(), bn->data.data(),
                                            tmp.data(), m, n, k);
                         kernels::axpy(tmp.data(), 1.0, an->grad.data(), m * k);
                       }
                       if (bn->requires_grad) {
                         bn->ensure_grad();
                         std::vector<double> tmp(k * n);
                         kernels::matmul_at(an->data.data(), node.grad.data(),
                                            tmp.data(), m, k, n);
                         kernels::axpy(tmp.data(), 1.0, bn->grad.data(), k * n);
                       }
                     });
}

Tensor matmul_bt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols())
    throw ContractError("matmul_bt: inner dimensions disagree, " +
                        shape_str(*a.node()) + " x " + shape_str(*b.node()) + "^T");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<double> out(m * n);
  kernels::matmul_bt(a.values().data(), b.values().data(), out.data(), m, k, n);

  auto an = a.node(), bn = b.node();
  return make_result(m, n, std::move(out), {an, bn},
                     [an, bn, m, k, n](TensorNode& node) {
                       if (an->requires_grad) {
                         an->ensure_grad();
                         std::vector<double> tmp(m * k);
                         kernels::matmul(node.grad.data(), bn->data.data(),
                                         tmp.data(), m, n, k);
                         kernels::axpy(tmp.data(), 1.0, an->grad.data(), m * k);
                       }
                       if (bn->requires_grad) {
                         bn->ensure_grad();
                         std::vector<double> tmp(n * k);
                         kernels::matmul_at(node.grad.data(), an->data.data(),
                                            tmp.data(), m, n, k);
                         kernels::axpy(tmp.data(), 1.0, bn->grad.data(), n * k);
                       }
                     });
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  kernels::add(a.values().data(), b.values().data(), out.data(), a.size());
  auto an = a.node(), bn = b.node();
  return make_result(a.rows(), a.cols(), std::move(out), {an, bn},
                     [an, bn](TensorNode& node) {
                       if (an->requires_grad) {
                         an->ensure_grad();
                         kernels::axpy(node.grad.data(), 1.0, an->grad.data(),
                                       node.grad.size());
                       }
                       if (bn->requires_grad) {
                         bn->ensure_grad();
                         kernels::axpy(node.grad.data(), 1.0, bn->grad.data(),
                                       node.grad.size());
                       }
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  kernels::sub(a.values().data(), b.values().data(), out.data(), a.size());
  auto an = a.node(), bn = b.node();
  return make_result(a.rows(), a.cols(), std::move(out), {an, bn},
                     [an, bn](TensorNode& node) {
                       if (an->requires_grad) {
                         an->ensure_grad();
                         kernels::axpy(node.grad.data(), 1.0, an->grad.data(),
                                       node.grad.size());
                       }
                       if (bn->requires_grad) {
                         bn->ensure_grad();
                         kernels::axpy(node.grad.data(), -1.0, bn->grad.data(),
                                       node.grad.size());
                       }
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  kernels::mul(a.values().data(), b.values().data(), out.data(), a.size());
  auto an = a.node(), bn = b.node();
  return make_result(a.rows(), a.cols(), std::move(out), {an, bn},
                     [an, bn](TensorNode& node) {
                       const std::size_t n = node.grad.size();
                       if (an->requires_grad) {
                         an->ensure_grad();
                         for (std::size_t i = 0; i < n; ++i)
                           an->grad[i] += node.grad[i] * bn->data[i];
                       }
                       if (bn->requires_grad) {
                         bn->ensure_grad();
                         for (std::size_t i = 0; i < n; ++i)
                           bn->grad[i] += node.grad[i] * an->data[i];
                       }
                     });
}

Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  kernels::scale(a.values().data(), s, out.data(), a.size());
  auto an = a.node();
  return make_result(a.rows(), a.cols(), std::move(out), {an},
                     [an, s](TensorNode& node) {
                       if (!an->requires_grad) return;
                       an->ensure_grad();
                       kernels::axpy(node.grad.data(), s, an->grad.data(),
                                     node.grad.size());
                     });
}

Tensor relu(const Tensor& a) {
  std::vector<double> out(a.size());
  kernels::relu(a.values().data(), out.data(), a.size());
  auto an = a.node();
  return make_result(a.rows(), a.cols(), std::move(out), {an},
                     [an](TensorNode& node) {
                       if (!an->requires_grad) return;
                       an->ensure_grad();
                       for (std::size_t i = 0; i < node.grad.size(); ++i)
                         if (an->data[i] > 0.0) an->grad[i] += node.grad[i];
                     });
}

Tensor add_row_broadcast(const Tensor& a, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != a.cols())
    throw ContractError("add_row_broadcast: bias shape " + shape_str(*bias.node()) +
                        " does not broadcast over " + shape_str(*a.node()));
  const std::size_t n = a.rows(), d = a.cols();
  std::vector<double> out(n * d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      out[i * d + j] = a(i, j) + bias(0, j);
  auto an = a.node(), bn = bias.node();
  return make_result(n, d, std::move(out), {an, bn},
                     [an, bn, n, d](TensorNode& node) {
                       if (an->requires_grad) {
                         an->ensure_grad();
                         kernels::axpy(node.grad.data(), 1.0, an->grad.data(), n * d);
                       }
                       if (bn->requires_grad) {
                         bn->ensure_grad();
                         for (std::size_t i = 0; i < n; ++i)
                           for (std::size_t j = 0; j < d; ++j)
                             bn->grad[j] += node.grad[i * d + j];
                       }
                     });
}

Tensor softmax_rows(const Tensor& scores, const Tensor& additive_mask) {
  check_same_shape(scores, additive_mask, "softmax_rows");
  const std::size_t n = scores.rows(), m = scores.cols();
  std::vector<double> out(n * m, 0.0);

  for (std::size_t i = 0; i < n; ++i) {
    double row_max = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < m; ++j) {
      if (is_masked(additive_mask(i, j))) continue;
      any = true;
      row_max = std::max(row_max, scores(i, j));
    }
    if (!any)
      throw ContractError("softmax_rows: row " + std::to_string(i) +
                          " is fully masked (degenerate row)");
    double z = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (is_masked(additive_mask(i, j))) continue;
      const double e = std::exp(scores(i, j) - row_max);
      out[i * m + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] /= z;
  }
  check_finite(out, "softmax_rows");

  auto sn = scores.node();
  auto self_data = out; // softmax values needed in the backward pass
  return make_result(n, m, std::move(out), {sn},
                     [sn, n, m, p = std::move(self_data)](TensorNode& node) {
                       if (!sn->requires_grad) return;
                       sn->ensure_grad();
                       for (std::size_t i = 0; i < n; ++i) {
                         double dot = 0.0;
                         for (std::size_t j = 0; j < m; ++j)
                           dot += p[i * m + j] * node.grad[i * m + j];
                         for (std::size_t j = 0; j < m; ++j)
                           sn->grad[i * m + j] +=
                               p[i * m + j] * (node.grad[i * m + j] - dot);
                       }
                     });
}

Tensor sparsegen_rows(const Tensor& scores, const Tensor& additive_mask,
                      double lambda) {
  check_same_shape(scores, additive_mask, "sparsegen_rows");
  const std::size_t n = scores.rows(), m = scores.cols();
  std::vector<double> out(n * m, 0.0);
  std::vector<SparseDistribution> dists;
  dists.reserve(n);

  std::vector<double> row(m);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j)
      row[j] = is_masked(additive_mask(i, j)) ? kMaskedScore : scores(i, j);
    SparseDistribution dist = sparsegen_lin(row, lambda);
    for (std::size_t j = 0; j < m; ++j) out[i * m + j] = dist.p[j];
    dists.push_back(std::move(dist));
  }
  check_finite(out, "sparsegen_rows");

  auto sn = scores.node();
  return make_result(n, m, std::move(out), {sn},
                     [sn, n, m, lambda, ds = std::move(dists)](TensorNode& node) {
                       if (!sn->requires_grad) return;
                       sn->ensure_grad();
                       std::vector<double> up(m);
                       for (std::size_t i = 0; i < n; ++i) {
                         for (std::size_t j = 0; j < m; ++j)
                           up[j] = node.grad[i * m + j];
                         const auto g = sparsemax_backward(ds[i], up, lambda);
                         for (std::size_t j = 0; j < m; ++j)
                           sn->grad[i * m + j] += g[j];
                       }
                     });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  const std::size_t n = x.rows(), d = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d)
    throw ContractError("layer_norm: gain/offset must be [1 x " +
                        std::to_string(d) + "]");

  std::vector<double> out(n * d);
  std::vector<double> xhat(n * d);
  std::vector<double> inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += x(i, j);
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = x(i, j) - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (x(i, j) - mu) * inv_std[i];
      out[i * d + j] = gamma(0, j) * xhat[i * d + j] + beta(0, j);
    }
  }

  auto xn = x.node(), gn = gamma.node(), bn = beta.node();
  return make_result(
      n, d, std::move(out), {xn, gn, bn},
      [xn, gn, bn, n, d, xh = std::move(xhat),
       istd = std::move(inv_std)](TensorNode& node) {
        for (std::size_t i = 0; i < n; ++i) {
          const double* dy = node.grad.data() + i * d;
          const double* xr = xh.data() + i * d;
          if (gn->requires_grad) {
            gn->ensure_grad();
            for (std::size_t j = 0; j < d; ++j) gn->grad[j] += dy[j] * xr[j];
          }
          if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t j = 0; j < d; ++j) bn->grad[j] += dy[j];
          }
          if (xn->requires_grad) {
            xn->ensure_grad();
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = dy[j] * gn->data[j];
              mean_dxhat += dxh;
              mean_dxhat_xhat += dxh * xr[j];
            }
            mean_dxhat /= static_cast<double>(d);
            mean_dxhat_xhat /= static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
              const double dxh = dy[j] * gn->data[j];
              xn->grad[i * d + j] +=
                  istd[i] * (dxh - mean_dxhat - xr[j] * mean_dxhat_xhat);
            }
          }
        }
      });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no parts");
  const std::size_t n = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != n) throw ContractError("concat_cols: row count mismatch");
    total += p.cols();
  }
  std::vector<double> out(n * total);
  std::size_t off = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j)
        out[i * total + off + j] = p(i, j);
    off += p.cols();
  }
  std::vector<std::shared_ptr<TensorNode>> parents;
  for (const auto& p : parts) parents.push_back(p.node());
  auto parent_copy = parents;
  return make_result(n, total, std::move(out), std::move(parents),
                     [ps = std::move(parent_copy), n, total](TensorNode& node) {
                       std::size_t off = 0;
                       for (const auto& p : ps) {
                         const std::size_t d = p->cols;
                         if (p->requires_grad) {
                           p->ensure_grad();
                           for (std::size_t i = 0; i < n; ++i)
                             for (std::size_t j = 0; j < d; ++j)
                               p->grad[i * d + j] += node.grad[i * total + off + j];
                         }
                         off += d;
                       }
                     });
}

Tensor mean_rows(const Tensor& x) {
  const std::size_t n = x.rows(), d = x.cols();
  std::vector<double> out(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) out[j] += x(i, j);
  for (std::size_t j = 0; j < d; ++j) out[j] /= static_cast<double>(n);
  auto xn = x.node();
  return make_result(1, d, std::move(out), {xn},
                     [xn, n, d](TensorNode& node) {
                       if (!xn->requires_grad) return;
                       xn->ensure_grad();
                       const double inv = 1.0 / static_cast<double>(n);
                       for (std::size_t i = 0; i < n; ++i)
                         for (std::size_t j = 0; j < d; ++j)
                           xn->grad[i * d + j] += node.grad[j] * inv;
                     });
}

Tensor dropout(const Tensor& x, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0)
    throw ContractError("dropout: rate must be in [0, 1), got " +
                        std::to_string(rate));
  if (rate == 0.0) return x;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.size());
  for (auto& m : mask) m = unif(rng) < rate ? 0.0 : keep_scale;

  std::vector<double> out(x.size());
  kernels::mul(x.values().data(), mask.data(), out.data(), x.size());
  auto xn = x.node();
  return make_result(x.rows(), x.cols(), std::move(out), {xn},
                     [xn, mk = std::move(mask)](TensorNode& node) {
                       if (!xn->requires_grad) return;
                       xn->ensure_grad();
                       for (std::size_t i = 0; i < node.grad.size(); ++i)
                         xn->grad[i] += node.grad[i] * mk[i];
                     });
}

Tensor masked_mae(const Tensor& pred, const Tensor& target, const Tensor& mask) {
  check_same_shape(pred, target, "masked_mae");
  check_same_shape(pred, mask, "masked_mae");
  double count = 0.0;
  for (double m : mask.values()) count += m;
  if (count <= 0.0)
    throw ContractError("masked_mae: mask selects no entries");

  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    total += std::abs(pred.values()[i] - target.values()[i]) * mask.values()[i];
  const double value = total / count;
  if (!std::isfinite(value))
    throw NumericalError("masked_mae: non-finite loss");

  auto pn = pred.node(), tn = target.node(), mn = mask.node();
  return make_result(1, 1, {value}, {pn},
                     [pn, tn, mn, count](TensorNode& node) {
                       if (!pn->requires_grad) return;
                       pn->ensure_grad();
                       const double up = node.grad[0] / count;
                       for (std::size_t i = 0; i < pn->data.size(); ++i) {
                         const double d = pn->data[i] - tn->data[i];
                         const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                         pn->grad[i] += up * s * mn->data[i];
                       }
                     });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::size_t label) {
  if (logits.rows() != 1)
    throw ContractError("softmax_cross_entropy: logits must be [1 x C]");
  const std::size_t c = logits.cols();
  if (label >= c)
    throw ContractError("softmax_cross_entropy: label " + std::to_string(label) +
                        " out of range for " + std::to_string(c) + " classes");

  double mx = logits.values()[0];
  for (double v : logits.values()) mx = std::max(mx, v);
  double z = 0.0;
  std::vector<double> p(c);
  for (std::size_t j = 0; j < c; ++j) {
    p[j] = std::exp(logits.values()[j] - mx);
    z += p[j];
  }
  for (auto& v : p) v /= z;
  const double loss = -std::log(std::max(p[label], 1e-300));

  auto ln = logits.node();
  return make_result(1, 1, {loss}, {ln},
                     [ln, label, pr = std::move(p)](TensorNode& node) {
                       if (!ln->requires_grad) return;
                       ln->ensure_grad();
                       const double up = node.grad[0];
                       for (std::size_t j = 0; j < pr.size(); ++j) {
                         const double onehot = j == label ? 1.0 : 0.0;
                         ln->grad[j] += up * (pr[j] - onehot);
                       }
                     });
}

Tensor abs_error(const Tensor& pred, double target) {
  if (pred.size() != 1)
    throw ContractError("abs_error: prediction must be scalar");
  const double d = pred.values()[0] - target;
  auto pn = pred.node();
  return make_result(1, 1, {std::abs(d)}, {pn},
                     [pn, d](TensorNode& node) {
                       if (!pn->requires_grad) return;
                       pn->ensure_grad();
                       const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                       pn->grad[0] += node.grad[0] * s;
                     });
}

void backward(const Tensor& scalar_loss) {
  if (scalar_loss.size() != 1)
    throw ContractError("backward: loss must be scalar, shape " +
                        shape_str(*scalar_loss.node()));
  if (!scalar_loss.requires_grad())
    throw ContractError("backward: loss does not require grad");

  // gather reachable nodes, then replay in decreasing creation order
  std::vector<std::shared_ptr<TensorNode>> nodes;
  std::vector<std::shared_ptr<TensorNode>> pending{scalar_loss.node()};
  std::unordered_set<const TensorNode*> seen;
  while (!pending.empty()) {
    auto cur = pending.back();
    pending.pop_back();
    if (!seen.insert(cur.get()).second) continue;
    nodes.push_back(cur);
    for (const auto& p : cur->parents)
      if (p->requires_grad) pending.push_back(p);
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const auto& a, const auto& b) { return a->id > b->id; });

  auto root = scalar_loss.node();
  root->ensure_grad();
  root->grad[0] += 1.0;
  for (const auto& n : nodes)
    if (n->backward_fn) n->backward_fn(*n);
}

std::vector<double> finite_difference_gradient(
    const std::function<double(const Tensor&)>& f, Tensor x, double eps) {
  if (eps <= 0.0) throw ContractError("finite_difference_gradient: eps must be > 0");
  std::vector<double> grad(x.size());
  auto& data = x.mutable_values();
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double saved = data[i];
    data[i] = saved + eps;
    const double fp = f(x);
    data[i] = saved - eps;
    const double fm = f(x);
    data[i] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw NumericalError("finite_difference_gradient: non-finite f output");
    grad[i] = (fp - fm) / (2.0 * eps);
  }
  return grad;
}

} // namespace ops

} // namespace stimpute
