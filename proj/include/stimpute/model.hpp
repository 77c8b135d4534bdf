#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "stimpute/attention.hpp"
#include "stimpute/batch.hpp"

namespace stimpute {

enum class TaskKind { kNone, kClassification, kRegression };

struct ModelConfig {
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t d_model = 128;
  double dropout = 0.15;
  double lambda = 0.5; // Sparsegen coefficient
  AttentionKind attention_kind = AttentionKind::kSparse;
  bool use_diagonal_mask = true; // ablation switch
  std::size_t n_features = 1;
  TaskKind task = TaskKind::kNone;
  std::size_t n_classes = 2;

  void validate() const;
};

struct StImputeModel {
  ModelConfig config;
  Tensor w_e, b_e; // [2f x d_model], [1 x d_model]
  std::vector<AttentionBlockParams> layers;
  Tensor w_r, b_r; // reconstruction head, [d_model x f]
  Tensor w_c, b_c; // downstream head, [d_model x n_out]

  // Per-channel z-score stats fitted on observed training values. Not
  // trainable; carried in checkpoints so `impute` can reuse them.
  Tensor norm_mean, norm_std; // [1 x f]

  static StImputeModel init(const ModelConfig& config, std::uint64_t seed);

  // Every trainable tensor with a stable name, in a fixed order.
  std::vector<std::pair<std::string, Tensor>> parameters() const;
  void zero_grads();
};

struct ForwardResult {
  Tensor reconstruction;  // [n x f]
  Tensor task_output;     // [1 x n_classes] logits or [1 x 1]; invalid when task none
};

// Eq-4-style embedding: concat values with the missing-in-input mask,
// project to d_model with ReLU, add the sinusoidal positional table.
Tensor embed_input(const Tensor& values, const Tensor& missing_mask,
                   const StImputeModel& model);

// Full forward pass of one series. values must be zero-filled at every
// position flagged in input_missing. Dropout runs only in training mode,
// keyed by dropout_seed. attn_out, when given, collects every head's
// attention matrix across layers.
ForwardResult forward_series(const StImputeModel& model, const Tensor& values,
                             const Tensor& input_missing, bool training,
                             std::uint64_t dropout_seed = 0,
                             std::vector<Tensor>* attn_out = nullptr);

// Fills only the naturally missing entries of a series; observed values are
// passed through untouched.
Tensor impute(const Series& series, const StImputeModel& model);

// Checkpoint format: versioned text with the config and each parameter as
// (name, shape, flat values) at full precision. save -> load -> forward is
// bit-identical.
void save_checkpoint(const StImputeModel& model, const std::string& path);
StImputeModel load_checkpoint(const std::string& path);

} // namespace stimpute
