#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "stimpute/attention.hpp"
#include "stimpute/sparse_activation.hpp"

using namespace stimpute;

namespace {

Tensor random_tensor(std::size_t rows, std::size_t cols, std::mt19937_64& rng,
                     bool requires_grad = false) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<double> data(rows * cols);
  for (auto& v : data) v = unif(rng);
  return Tensor::from_rows(rows, cols, std::move(data), requires_grad);
}

AttentionBlockParams random_params(std::size_t d_model, std::size_t heads,
                                   std::mt19937_64& rng, bool requires_grad = false) {
  const std::size_t dk = d_model / heads;
  AttentionBlockParams p;
  for (std::size_t h = 0; h < heads; ++h) {
    p.w_q.push_back(random_tensor(d_model, dk, rng, requires_grad));
    p.w_k.push_back(random_tensor(d_model, dk, rng, requires_grad));
    p.w_v.push_back(random_tensor(d_model, dk, rng, requires_grad));
  }
  p.w_o = random_tensor(heads * dk, d_model, rng, requires_grad);
  p.ffn_w1 = random_tensor(d_model, 4 * d_model, rng, requires_grad);
  p.ffn_b1 = Tensor(1, 4 * d_model, 0.0, requires_grad);
  p.ffn_w2 = random_tensor(4 * d_model, d_model, rng, requires_grad);
  p.ffn_b2 = Tensor(1, d_model, 0.0, requires_grad);
  p.ln1_gamma = Tensor(1, d_model, 1.0, requires_grad);
  p.ln1_beta = Tensor(1, d_model, 0.0, requires_grad);
  p.ln2_gamma = Tensor(1, d_model, 1.0, requires_grad);
  p.ln2_beta = Tensor(1, d_model, 0.0, requires_grad);
  return p;
}

} // namespace

TEST_CASE("diagonal mask layout") {
  Tensor m2 = diagonal_mask(2);
  CHECK(m2(0, 0) == kMaskedScore);
  CHECK(m2(0, 1) == 0.0);
  CHECK(m2(1, 0) == 0.0);
  CHECK(m2(1, 1) == kMaskedScore);

  Tensor m3 = diagonal_mask(3);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(m3(i, j) == (i == j ? kMaskedScore : 0.0));

  CHECK_THROWS_AS(diagonal_mask(1), ContractError);
}

TEST_CASE("n=2 attention puts all mass on the other timestep") {
  std::mt19937_64 rng(7);
  Tensor x = random_tensor(2, 8, rng);
  auto params = random_params(8, 2, rng);
  std::vector<Tensor> attn;
  self_attention(x, params, diagonal_mask(2), AttentionKind::kSparse, 0.5, &attn);
  REQUIRE(attn.size() == 2);
  for (const auto& a : attn) {
    CHECK(a(0, 0) == 0.0);
    CHECK(a(0, 1) == doctest::Approx(1.0));
    CHECK(a(1, 0) == doctest::Approx(1.0));
    CHECK(a(1, 1) == 0.0);
  }
}

TEST_CASE("identical rows give uniform off-diagonal attention") {
  std::mt19937_64 rng(11);
  Tensor one_row = random_tensor(1, 8, rng);
  Tensor x(4, 8, 0.0);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 8; ++j) x.at(i, j) = one_row(0, j);

  auto params = random_params(8, 2, rng);
  std::vector<Tensor> attn;
  self_attention(x, params, diagonal_mask(4), AttentionKind::kSparse, 0.5, &attn);
  for (const auto& a : attn) {
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(a(i, i) == 0.0);
      for (std::size_t j = 0; j < 4; ++j)
        if (i != j) CHECK(a(i, j) == doctest::Approx(1.0 / 3).epsilon(1e-9));
    }
  }
}

TEST_CASE("attention matches a straight-line reference computation") {
  std::mt19937_64 rng(13);
  const std::size_t n = 6, d_model = 8, heads = 2, dk = d_model / heads;
  const double lambda = 0.5;
  Tensor x = random_tensor(n, d_model, rng);
  auto params = random_params(d_model, heads, rng);

  Tensor out = self_attention(x, params, diagonal_mask(n), AttentionKind::kSparse,
                              lambda);

  // reference: materialize every step with plain loops
  std::vector<std::vector<double>> merged(n, std::vector<double>(heads * dk, 0.0));
  for (std::size_t h = 0; h < heads; ++h) {
    auto project = [&](const Tensor& w) {
      std::vector<std::vector<double>> r(n, std::vector<double>(dk, 0.0));
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dk; ++j)
          for (std::size_t p = 0; p < d_model; ++p) r[i][j] += x(i, p) * w(p, j);
      return r;
    };
    const auto q = project(params.w_q[h]);
    const auto k = project(params.w_k[h]);
    const auto v = project(params.w_v[h]);

    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> scores(n, 0.0);
      for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t p = 0; p < dk; ++p) scores[j] += k[i][p] * q[j][p];
        scores[j] /= std::sqrt(static_cast<double>(dk));
        if (i == j) scores[j] = kMaskedScore;
      }
      const auto dist = sparsegen_lin(scores, lambda);
      for (std::size_t j = 0; j < n; ++j)
        for (std::size_t p = 0; p < dk; ++p)
          merged[i][h * dk + p] += dist.p[j] * v[j][p];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d_model; ++j) {
      double expected = 0.0;
      for (std::size_t p = 0; p < heads * dk; ++p)
        expected += merged[i][p] * params.w_o(p, j);
      CHECK(out(i, j) == doctest::Approx(expected).epsilon(1e-9));
    }
  }
}

TEST_CASE("attention rows sum to one with exact zero diagonal") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 5;
    Tensor x = random_tensor(n, 8, rng);
    auto params = random_params(8, 4, rng);
    for (auto kind : {AttentionKind::kSparse, AttentionKind::kSoftmax}) {
      std::vector<Tensor> attn;
      self_attention(x, params, diagonal_mask(n), kind, 0.5, &attn);
      for (const auto& a : attn) {
        for (std::size_t i = 0; i < n; ++i) {
          CHECK(a(i, i) == 0.0);
          double sum = 0.0;
          for (std::size_t j = 0; j < n; ++j) sum += a(i, j);
          CHECK(std::abs(sum - 1.0) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("positional encoding closed forms") {
  Tensor pe = positional_encoding(10, 8);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(pe(0, 2 * i) == 0.0);       // sin 0
    CHECK(pe(0, 2 * i + 1) == 1.0);   // cos 0
  }
  CHECK(pe(1, 0) == doctest::Approx(std::sin(1.0)).epsilon(1e-12));
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      CHECK(pe(i, j) <= 1.0);
      CHECK(pe(i, j) >= -1.0);
    }
  CHECK_THROWS_AS(positional_encoding(4, 7), ContractError);
}

TEST_CASE("encoder layer gradients match finite differences") {
  std::mt19937_64 rng(19);
  const std::size_t n = 4, d_model = 8;
  Tensor x = random_tensor(n, d_model, rng, /*requires_grad=*/true);
  auto params = random_params(d_model, 2, rng, /*requires_grad=*/true);
  Tensor mask = diagonal_mask(n);

  auto loss_of = [&]() {
    Tensor y = encoder_layer(x, params, mask, AttentionKind::kSparse, 0.5, 0.0, 0,
                             /*training=*/false);
    // weighted scalar reduction
    Tensor w(n, d_model, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d_model; ++j)
        w.at(i, j) = 0.05 * static_cast<double>(i + 2 * j) - 0.3;
    Tensor prod = ops::mul(y, w);
    Tensor ones_c(d_model, 1, 1.0);
    Tensor ones_r(1, n, 1.0);
    return ops::matmul(ones_r, ops::matmul(prod, ones_c));
  };

  Tensor loss = loss_of();
  ops::backward(loss);

  auto check_param = [&](Tensor t) {
    std::vector<double> tape(t.size(), 0.0);
    if (t.has_gradient()) tape.assign(t.gradient().begin(), t.gradient().end());
    auto f = [&](const Tensor&) { return loss_of().item(); };
    const auto fd = ops::finite_difference_gradient(f, t);
    for (std::size_t i = 0; i < fd.size(); ++i) {
      const double denom = std::max({std::abs(tape[i]), std::abs(fd[i]), 1e-4});
      CHECK(std::abs(tape[i] - fd[i]) / denom < 1e-4);
    }
  };
  check_param(x);
  check_param(params.w_q[0]);
  check_param(params.w_v[1]);
  check_param(params.ffn_w1);
  check_param(params.ln1_gamma);
}
