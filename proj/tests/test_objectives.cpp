#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "stimpute/objectives.hpp"

using namespace stimpute;

namespace {

Series fully_observed(std::size_t n, std::size_t f, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Series s;
  s.values = Tensor(n, f, 0.0);
  s.natural_missing = Tensor(n, f, 0.0);
  s.mim_mask = Tensor(n, f, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) s.values.at(i, j) = unif(rng);
  refresh_observed_mask(s);
  return s;
}

ModelConfig tiny_config(TaskKind task) {
  ModelConfig c;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_model = 8;
  c.dropout = 0.0;
  c.n_features = 2;
  c.task = task;
  return c;
}

} // namespace

TEST_CASE("mim mask sampling") {
  std::mt19937_64 rng(3);
  Series s = fully_observed(100, 2, rng);
  s.natural_missing.at(0, 0) = 1.0;
  s.values.at(0, 0) = 0.0;
  refresh_observed_mask(s);

  Series a = s, b = s;
  sample_mim_mask(a, 0.5, 11);
  sample_mim_mask(b, 0.5, 11);

  double masked = 0.0;
  for (std::size_t i = 0; i < a.mim_mask.size(); ++i) {
    CHECK(a.mim_mask.values()[i] == b.mim_mask.values()[i]);
    masked += a.mim_mask.values()[i];
  }
  // roughly half of the 199 observed entries
  CHECK(masked > 60);
  CHECK(masked < 140);

  // never overlaps natural missingness, and observed_mask was rebuilt
  CHECK(a.mim_mask(0, 0) == 0.0);
  for (std::size_t i = 0; i < a.values.rows(); ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      const double parts = a.natural_missing(i, j) + a.mim_mask(i, j) +
                           a.observed_mask(i, j);
      CHECK(parts == 1.0);
    }

  Series c = s;
  sample_mim_mask(c, 0.3, 12);
  bool differs = false;
  for (std::size_t i = 0; i < c.mim_mask.size(); ++i)
    if (c.mim_mask.values()[i] != a.mim_mask.values()[i]) differs = true;
  CHECK(differs);
}

TEST_CASE("mim mask keeps at least one observed entry") {
  std::mt19937_64 rng(5);
  Series s = fully_observed(3, 1, rng);
  sample_mim_mask(s, 0.999999, 1);
  double observed = 0.0;
  for (double v : s.observed_mask.values()) observed += v;
  CHECK(observed >= 1.0);
}

TEST_CASE("loss terms on hand-computed examples") {
  Tensor truth = Tensor::from_rows(2, 1, {1.0, 2.0});
  Tensor pred = Tensor::from_rows(2, 1, {1.5, 3.0});
  Tensor mask = Tensor::from_rows(2, 1, {1.0, 1.0});
  CHECK(loss_mim(truth, pred, mask).item() == doctest::Approx(0.75));

  Tensor partial = Tensor::from_rows(2, 1, {0.0, 1.0});
  CHECK(loss_nrl(truth, pred, partial).item() == doctest::Approx(1.0));

  Tensor empty_mask(2, 1, 0.0);
  CHECK_THROWS_AS(loss_mim(truth, pred, empty_mask), ContractError);
}

TEST_CASE("downstream loss per task") {
  Tensor logits = Tensor::from_rows(1, 2, {0.0, 0.0});
  CHECK(loss_downstream(logits, 0.0, TaskKind::kClassification).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(loss_downstream(logits, 0.5, TaskKind::kClassification),
                  ContractError);
  CHECK_THROWS_AS(loss_downstream(logits, 5.0, TaskKind::kClassification),
                  ContractError);

  Tensor scalar = Tensor::from_rows(1, 1, {1.25});
  CHECK(loss_downstream(scalar, 2.0, TaskKind::kRegression).item() ==
        doctest::Approx(0.75));
  CHECK_THROWS_AS(loss_downstream(scalar, 1.0, TaskKind::kNone), ContractError);
}

TEST_CASE("combined loss pools masked entries across the batch") {
  std::mt19937_64 rng(7);
  auto model = StImputeModel::init(tiny_config(TaskKind::kNone), 13);

  TimeSeriesBatch batch;
  batch.series.push_back(fully_observed(8, 2, rng));
  batch.series.push_back(fully_observed(12, 2, rng));
  sample_mim_mask(batch, 0.4, 21);

  const auto combined = loss_combined(batch, model, /*training=*/false);
  CHECK(std::isfinite(combined.total.item()));
  CHECK(combined.labeled_count == 0);
  CHECK(combined.downstream == 0.0);
  CHECK(combined.total.item() ==
        doctest::Approx(combined.mim + combined.nrl).epsilon(1e-12));

  // manual pooled recomputation from per-entry absolute errors
  double mim_sum = 0.0, mim_count = 0.0, nrl_sum = 0.0, nrl_count = 0.0;
  for (std::size_t idx = 0; idx < batch.series.size(); ++idx) {
    const Series& s = batch.series[idx];
    Tensor input(s.length(), 2, 0.0), missing(s.length(), 2, 0.0);
    for (std::size_t i = 0; i < s.length(); ++i)
      for (std::size_t j = 0; j < 2; ++j)
        if (s.mim_mask(i, j) != 0.0)
          missing.at(i, j) = 1.0;
        else
          input.at(i, j) = s.values(i, j);
    auto fwd = forward_series(model, input, missing, false);
    for (std::size_t i = 0; i < s.length(); ++i)
      for (std::size_t j = 0; j < 2; ++j) {
        const double err = std::abs(fwd.reconstruction(i, j) - s.values(i, j));
        if (s.mim_mask(i, j) != 0.0) {
          mim_sum += err;
          mim_count += 1.0;
        } else if (s.observed_mask(i, j) != 0.0) {
          nrl_sum += err;
          nrl_count += 1.0;
        }
      }
  }
  CHECK(combined.mim == doctest::Approx(mim_sum / mim_count).epsilon(1e-10));
  CHECK(combined.nrl == doctest::Approx(nrl_sum / nrl_count).epsilon(1e-10));
}

TEST_CASE("combined loss includes the downstream term only for labeled series") {
  std::mt19937_64 rng(9);
  auto model = StImputeModel::init(tiny_config(TaskKind::kClassification), 17);

  TimeSeriesBatch batch;
  batch.series.push_back(fully_observed(8, 2, rng));
  batch.series.push_back(fully_observed(8, 2, rng));
  batch.series.push_back(fully_observed(8, 2, rng));
  batch.series[0].label = 1.0;
  batch.series[2].label = 0.0;
  sample_mim_mask(batch, 0.3, 31);

  const auto combined = loss_combined(batch, model, false);
  CHECK(combined.labeled_count == 2);
  CHECK(combined.downstream > 0.0);
  CHECK(combined.total.item() ==
        doctest::Approx(combined.mim + combined.nrl + combined.downstream)
            .epsilon(1e-12));

  // hide labels: downstream drops out entirely
  TimeSeriesBatch unlabeled = batch;
  for (auto& s : unlabeled.series) s.label.reset();
  const auto without = loss_combined(unlabeled, model, false);
  CHECK(without.labeled_count == 0);
  CHECK(without.downstream == 0.0);
  CHECK(without.total.item() ==
        doctest::Approx(without.mim + without.nrl).epsilon(1e-12));
}

TEST_CASE("combined loss is deterministic under the dropout seed") {
  std::mt19937_64 rng(13);
  auto config = tiny_config(TaskKind::kNone);
  config.dropout = 0.2;
  auto model = StImputeModel::init(config, 19);

  TimeSeriesBatch batch;
  batch.series.push_back(fully_observed(10, 2, rng));
  sample_mim_mask(batch, 0.4, 5);

  const double a = loss_combined(batch, model, true, 77).total.item();
  const double b = loss_combined(batch, model, true, 77).total.item();
  const double c = loss_combined(batch, model, true, 78).total.item();
  CHECK(a == b);
  CHECK(a != c);

  CHECK_THROWS_AS(loss_combined(TimeSeriesBatch{}, model), ContractError);
}
