#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "stimpute/errors.hpp"

namespace stimpute {

// Additive-mask sentinel standing in for -inf. Large enough that masked
// entries always lose the row max, small enough to keep arithmetic finite.
inline constexpr double kMaskedScore = -1e30;

// One node of the compute tape. Nodes carry a monotonically increasing id;
// replaying reachable nodes in decreasing id order visits each exactly once
// in reverse topological order.
struct TensorNode {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
  std::vector<double> grad; // sized lazily, same length as data
  bool requires_grad = false;
  std::uint64_t id = 0;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad();
};

// Value-semantic handle on a tape node. All model math is expressed as 2-D
// matrices ([1 x n] for vectors, [1 x 1] for scalars); batches are handled
// one series at a time above this layer.
class Tensor {
public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0,
         bool requires_grad = false);
  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

  static Tensor from_rows(std::size_t rows, std::size_t cols,
                          std::vector<double> values, bool requires_grad = false);
  static Tensor row(std::initializer_list<double> values);
  static Tensor scalar(double value);

  bool valid() const { return node_ != nullptr; }
  std::size_t rows() const { return node_->rows; }
  std::size_t cols() const { return node_->cols; }
  std::size_t size() const { return node_->data.size(); }

  double operator()(std::size_t i, std::size_t j) const;
  double& at(std::size_t i, std::size_t j);

  std::span<const double> values() const { return node_->data; }
  std::vector<double>& mutable_values() { return node_->data; }
  std::span<const double> gradient() const;
  bool has_gradient() const { return !node_->grad.empty(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad();

  // Value of a [1 x 1] tensor.
  double item() const;

  std::shared_ptr<TensorNode> node() const { return node_; }

private:
  std::shared_ptr<TensorNode> node_;
};

namespace ops {

// c = a * b, shapes [m x k] x [k x n].
Tensor matmul(const Tensor& a, const Tensor& b);

// c = a * b^T, shapes [m x k] x [n x k].
Tensor matmul_bt(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor relu(const Tensor& a);

// [n x d] + [1 x d] broadcast over rows.
Tensor add_row_broadcast(const Tensor& a, const Tensor& bias);

// Row-wise softmax of scores + additive mask. Mask entries are 0 or
// kMaskedScore; masked positions come out exactly 0. A fully-masked row is a
// ContractError.
Tensor softmax_rows(const Tensor& scores, const Tensor& additive_mask);

// Row-wise Sparsegen-lin of scores + additive mask, same masking contract.
Tensor sparsegen_rows(const Tensor& scores, const Tensor& additive_mask,
                      double lambda);

// Per-row layer normalization with learnable gain/offset [1 x d].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// Horizontal concatenation of equal-height blocks.
Tensor concat_cols(const std::vector<Tensor>& parts);

// Column means, [n x d] -> [1 x d].
Tensor mean_rows(const Tensor& x);

// Inverted-scaling dropout with a seed-deterministic keep mask.
Tensor dropout(const Tensor& x, double rate, std::uint64_t seed);

// (1/sum(mask)) * sum |pred - target| .* mask, as a [1 x 1] tape node.
// target and mask are treated as constants.
Tensor masked_mae(const Tensor& pred, const Tensor& target, const Tensor& mask);

// Cross-entropy of softmaxed logits [1 x C] against a class index.
Tensor softmax_cross_entropy(const Tensor& logits, std::size_t label);

// |pred - target| for a scalar prediction.
Tensor abs_error(const Tensor& pred, double target);

// Accumulates gradients of every parameter reachable from a scalar loss.
void backward(const Tensor& scalar_loss);

// Central-difference gradient oracle, one coordinate at a time.
std::vector<double> finite_difference_gradient(
    const std::function<double(const Tensor&)>& f, Tensor x, double eps = 1e-5);

} // namespace ops

} // namespace stimpute
