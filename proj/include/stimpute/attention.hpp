#pragma once

#include <cstdint>
#include <vector>

#include "stimpute/tensor.hpp"

namespace stimpute {

enum class AttentionKind { kSparse, kSoftmax };

// Parameters of one encoder layer: per-head projections, output projection,
// feed-forward weights and the two layer-norm gain/offset pairs.
struct AttentionBlockParams {
  std::vector<Tensor> w_q; // per head, [d_model x d_k]
  std::vector<Tensor> w_k;
  std::vector<Tensor> w_v;
  Tensor w_o;              // [heads*d_k x d_model]
  Tensor ffn_w1;           // [d_model x 4*d_model]
  Tensor ffn_b1;
  Tensor ffn_w2;           // [4*d_model x d_model]
  Tensor ffn_b2;
  Tensor ln1_gamma, ln1_beta;
  Tensor ln2_gamma, ln2_beta;

  std::size_t heads() const { return w_q.size(); }
};

// Additive mask that forbids each timestep from attending to itself:
// 0 off the diagonal, the -inf sentinel on it. n must be >= 2, otherwise the
// only entry of a row would be masked.
Tensor diagonal_mask(std::size_t n);

// All-zero additive mask of the same shape, for the no-mask ablation.
Tensor no_mask(std::size_t n);

// Multi-head self-attention with an additive score mask. Per head the scores
// are K*Q^T / sqrt(d_k) + mask, rows normalized by Sparsegen-lin (or softmax
// for the dense baseline), then applied to V; heads are concatenated and
// projected by w_o. When attn_out is non-null the per-head attention
// matrices are copied into it.
Tensor self_attention(const Tensor& x, const AttentionBlockParams& params,
                      const Tensor& mask, AttentionKind kind, double lambda,
                      std::vector<Tensor>* attn_out = nullptr);

// Pre-norm residual encoder layer:
//   h = x + Dropout(Attention(LN(x)))
//   y = h + Dropout(FFN(LN(h)))
// with FFN = Linear -> ReLU -> Linear at inner width 4*d_model. Dropout is
// active only in training mode and is deterministic under dropout_seed.
Tensor encoder_layer(const Tensor& x, const AttentionBlockParams& params,
                     const Tensor& mask, AttentionKind kind, double lambda,
                     double dropout_rate, std::uint64_t dropout_seed,
                     bool training, std::vector<Tensor>* attn_out = nullptr);

// Sinusoidal positional table [n x d_model]; d_model must be even.
Tensor positional_encoding(std::size_t n, std::size_t d_model);

} // namespace stimpute
