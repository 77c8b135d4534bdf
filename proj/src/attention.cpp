#include "stimpute/attention.hpp"

#include <cmath>
#include <string>

namespace stimpute {

Tensor diagonal_mask(std::size_t n) {
  if (n < 2)
    throw ContractError("diagonal_mask: n must be >= 2, got " + std::to_string(n));
  Tensor mask(n, n, 0.0);
  for (std::size_t i = 0; i < n; ++i) mask.at(i, i) = kMaskedScore;
  return mask;
}

Tensor no_mask(std::size_t n) { return Tensor(n, n, 0.0); }

Tensor self_attention(const Tensor& x, const AttentionBlockParams& params,
                      const Tensor& mask, AttentionKind kind, double lambda,
                      std::vector<Tensor>* attn_out) {
  const std::size_t n = x.rows();
  if (mask.rows() != n || mask.cols() != n)
    throw ContractError("self_attention: mask size " + std::to_string(mask.rows()) +
                        " does not match sequence length " + std::to_string(n));

  const std::size_t heads = params.heads();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(params.w_q[0].cols()));

  std::vector<Tensor> head_outputs;
  head_outputs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Tensor q = ops::matmul(x, params.w_q[h]);
    Tensor k = ops::matmul(x, params.w_k[h]);
    Tensor v = ops::matmul(x, params.w_v[h]);
    Tensor scores = ops::scale(ops::matmul_bt(k, q), inv_sqrt_dk);
    Tensor attn = kind == AttentionKind::kSparse
                      ? ops::sparsegen_rows(scores, mask, lambda)
                      : ops::softmax_rows(scores, mask);
    if (attn_out) attn_out->push_back(attn);
    head_outputs.push_back(ops::matmul(attn, v));
  }

  Tensor merged = heads == 1 ? head_outputs[0] : ops::concat_cols(head_outputs);
  return ops::matmul(merged, params.w_o);
}

Tensor encoder_layer(const Tensor& x, const AttentionBlockParams& params,
                     const Tensor& mask, AttentionKind kind, double lambda,
                     double dropout_rate, std::uint64_t dropout_seed,
                     bool training, std::vector<Tensor>* attn_out) {
  const bool drop = training && dropout_rate > 0.0;

  Tensor attn_in = ops::layer_norm(x, params.ln1_gamma, params.ln1_beta);
  Tensor attn = self_attention(attn_in, params, mask, kind, lambda, attn_out);
  if (drop) attn = ops::dropout(attn, dropout_rate, dropout_seed * 2 + 1);
  Tensor h = ops::add(x, attn);

  Tensor ffn_in = ops::layer_norm(h, params.ln2_gamma, params.ln2_beta);
  Tensor hidden = ops::relu(
      ops::add_row_broadcast(ops::matmul(ffn_in, params.ffn_w1), params.ffn_b1));
  Tensor ffn = ops::add_row_broadcast(ops::matmul(hidden, params.ffn_w2),
                                      params.ffn_b2);
  if (drop) ffn = ops::dropout(ffn, dropout_rate, dropout_seed * 2 + 2);
  return ops::add(h, ffn);
}

Tensor positional_encoding(std::size_t n, std::size_t d_model) {
  if (d_model % 2 != 0)
    throw ContractError("positional_encoding: d_model must be even");
  Tensor pe(n, d_model, 0.0);
  for (std::size_t pos = 0; pos < n; ++pos) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double angle =
          static_cast<double>(pos) /
          std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(d_model));
      pe.at(pos, 2 * i) = std::sin(angle);
      pe.at(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

} // namespace stimpute
