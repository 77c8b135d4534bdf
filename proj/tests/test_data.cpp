#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>

#include "stimpute/data.hpp"

using namespace stimpute;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(std::string name, const std::string& content)
      : path(std::move(name)) {
    std::ofstream out(path);
    out << content;
  }
  ~TempFile() { std::remove(path.c_str()); }
};

} // namespace

TEST_CASE("csv loading") {
  TempFile file("data_basic.csv",
                "series_id,t,f0,f1,label\n"
                "a,0,1.0,2.0,1\n"
                "a,1,,3.0,1\n"
                "b,0,4.0,NaN,0\n"
                "b,1,5.0,6.0,0\n");
  Dataset d = load_csv(file.path);
  REQUIRE(d.batch.series.size() == 2);
  CHECK(d.n_features == 2);
  CHECK(d.task == TaskKind::kClassification);
  CHECK(d.series_ids == std::vector<std::string>{"a", "b"});

  const Series& a = d.batch.series[0];
  CHECK(a.values(0, 0) == 1.0);
  CHECK(a.natural_missing(1, 0) == 1.0);
  CHECK(a.values(1, 1) == 3.0);
  CHECK(a.label == 1.0);

  const Series& b = d.batch.series[1];
  CHECK(b.natural_missing(0, 1) == 1.0);
  CHECK(b.observed_mask(1, 0) == 1.0);
  CHECK(b.label == 0.0);
}

TEST_CASE("csv loading rejects malformed input with line numbers") {
  TempFile ragged("data_ragged.csv",
                  "series_id,t,f0\n"
                  "a,0,1.0\n"
                  "a,1\n");
  CHECK_THROWS_WITH_AS(load_csv(ragged.path), doctest::Contains("line 3"),
                       DataError);

  TempFile bad_num("data_badnum.csv",
                   "series_id,t,f0\n"
                   "a,0,hello\n");
  CHECK_THROWS_AS(load_csv(bad_num.path), DataError);

  TempFile dup("data_dup.csv",
               "series_id,t,f0\n"
               "a,0,1.0\n"
               "a,0,2.0\n");
  CHECK_THROWS_WITH_AS(load_csv(dup.path), doctest::Contains("duplicate"),
                       DataError);

  TempFile bad_header("data_header.csv", "id,time,f0\na,0,1.0\n");
  CHECK_THROWS_AS(load_csv(bad_header.path), DataError);

  CHECK_THROWS_AS(load_csv("no_such_file.csv"), DataError);
}

TEST_CASE("fractional labels read as a regression task") {
  TempFile file("data_reg.csv",
                "series_id,t,f0,label\n"
                "a,0,1.0,0.75\n"
                "b,0,2.0,1.5\n");
  Dataset d = load_csv(file.path);
  CHECK(d.task == TaskKind::kRegression);
}

TEST_CASE("csv round trip is lossless") {
  SyntheticSpec spec;
  spec.n_series = 5;
  spec.length = 12;
  spec.n_features = 2;
  spec.task = TaskKind::kClassification;
  Dataset original = generate_synthetic(spec);
  // punch a few holes so missingness round-trips too
  original.batch.series[0].natural_missing.at(3, 1) = 1.0;
  original.batch.series[0].values.at(3, 1) = 0.0;
  refresh_observed_mask(original.batch.series[0]);

  const std::string path = "data_roundtrip.csv";
  save_csv(original, path);
  Dataset loaded = load_csv(path);
  std::remove(path.c_str());

  REQUIRE(loaded.batch.series.size() == original.batch.series.size());
  CHECK(loaded.task == TaskKind::kClassification);
  for (std::size_t k = 0; k < loaded.batch.series.size(); ++k) {
    const Series& x = original.batch.series[k];
    const Series& y = loaded.batch.series[k];
    REQUIRE(y.values.rows() == x.values.rows());
    CHECK(*y.label == *x.label);
    for (std::size_t i = 0; i < x.values.rows(); ++i)
      for (std::size_t j = 0; j < x.values.cols(); ++j) {
        CHECK(y.natural_missing(i, j) == x.natural_missing(i, j));
        if (x.natural_missing(i, j) == 0.0)
          CHECK(y.values(i, j) == x.values(i, j)); // full-precision write
      }
  }
}

TEST_CASE("synthetic generation is seeded and labeled") {
  SyntheticSpec spec;
  spec.n_series = 20;
  spec.length = 16;
  spec.n_features = 2;
  spec.task = TaskKind::kClassification;

  Dataset a = generate_synthetic(spec);
  Dataset b = generate_synthetic(spec);
  REQUIRE(a.batch.series.size() == 20);
  bool saw0 = false, saw1 = false;
  for (std::size_t k = 0; k < 20; ++k) {
    const Series& sa = a.batch.series[k];
    const Series& sb = b.batch.series[k];
    CHECK(*sa.label == *sb.label);
    if (*sa.label == 0.0) saw0 = true;
    if (*sa.label == 1.0) saw1 = true;
    for (std::size_t i = 0; i < sa.values.size(); ++i)
      CHECK(sa.values.values()[i] == sb.values.values()[i]);
  }
  CHECK(saw0);
  CHECK(saw1);

  spec.seed = 8;
  Dataset c = generate_synthetic(spec);
  CHECK(c.batch.series[0].values(0, 0) != a.batch.series[0].values(0, 0));

  spec.task = TaskKind::kRegression;
  Dataset r = generate_synthetic(spec);
  for (const auto& s : r.batch.series) {
    CHECK(*s.label >= 0.6); // (a1 + a2) / 2 with a1 in [0.8, 1.2], a2 in [0.4, 0.7]
    CHECK(*s.label <= 0.95);
  }
}

TEST_CASE("normalization fits observed training values only") {
  SyntheticSpec spec;
  spec.n_series = 10;
  spec.length = 24;
  spec.n_features = 2;
  Dataset d = generate_synthetic(spec);
  // hide some entries; their values must not leak into the stats
  d.batch.series[0].natural_missing.at(0, 0) = 1.0;
  d.batch.series[0].values.at(0, 0) = 1e9;
  refresh_observed_mask(d.batch.series[0]);

  Normalization norm = fit_normalization(d.batch);
  REQUIRE(norm.mean.size() == 2);
  CHECK(std::abs(norm.mean[0]) < 1.0); // the 1e9 outlier was ignored
  CHECK(norm.std_dev[0] > 0.0);
  CHECK_FALSE(norm.constant[0]);

  apply_normalization(d.batch, norm);
  Normalization refit = fit_normalization(d.batch);
  CHECK(std::abs(refit.mean[0]) < 1e-9);
  CHECK(std::abs(refit.mean[1]) < 1e-9);
  CHECK(refit.std_dev[0] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("constant channels normalize safely") {
  TimeSeriesBatch batch;
  Series s;
  s.values = Tensor(4, 1, 2.5);
  s.natural_missing = Tensor(4, 1, 0.0);
  refresh_observed_mask(s);
  batch.series.push_back(s);

  Normalization norm = fit_normalization(batch);
  CHECK(norm.constant[0]);
  CHECK(norm.std_dev[0] == 1.0);
  apply_normalization(batch, norm);
  for (double v : batch.series[0].values.values()) CHECK(v == 0.0);
}

TEST_CASE("train test split is deterministic and disjoint") {
  SyntheticSpec spec;
  spec.n_series = 25;
  spec.length = 8;
  spec.n_features = 1;
  Dataset d = generate_synthetic(spec);

  TimeSeriesBatch train1, test1, train2, test2;
  split_train_test(d, 0.2, 3, train1, test1);
  split_train_test(d, 0.2, 3, train2, test2);
  CHECK(test1.series.size() == 5);
  CHECK(train1.series.size() == 20);
  CHECK(train1.series.size() + test1.series.size() == 25);
  for (std::size_t i = 0; i < test1.series.size(); ++i)
    CHECK(test1.series[i].values(0, 0) == test2.series[i].values(0, 0));

  TimeSeriesBatch train3, test3;
  split_train_test(d, 0.2, 4, train3, test3);
  bool differs = false;
  for (std::size_t i = 0; i < test1.series.size(); ++i)
    if (test1.series[i].values(0, 0) != test3.series[i].values(0, 0))
      differs = true;
  CHECK(differs);
}

TEST_CASE("config files parse as flat key value pairs") {
  TempFile file("config_ok.cfg",
                "# model\n"
                "d_model = 32\n"
                "n_layers=2\n"
                "\n"
                "learning_rate = 0.001  # adam\n"
                "mystery_key = 1\n");
  auto kv = parse_config_file(file.path);
  CHECK(kv.size() == 4);
  CHECK(kv.at("d_model") == "32");
  CHECK(kv.at("learning_rate") == "0.001");

  ModelConfig mc;
  TrainConfig tc;
  apply_model_config_keys(kv, mc);
  apply_train_config_keys(kv, tc);
  CHECK(mc.d_model == 32);
  CHECK(mc.n_layers == 2);
  CHECK(tc.learning_rate == 0.001);
  CHECK(kv.size() == 1); // recognized keys were consumed
  CHECK_THROWS_WITH_AS(reject_unknown_keys(kv, "test config"),
                       doctest::Contains("mystery_key"), DataError);

  TempFile bad("config_bad.cfg", "not a key value line\n");
  CHECK_THROWS_AS(parse_config_file(bad.path), DataError);
  CHECK_THROWS_AS(parse_config_file("missing.cfg"), DataError);
}
