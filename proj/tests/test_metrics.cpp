#include <doctest.h>

#include <cmath>
#include <sstream>

#include "hfedms/error.hpp"
#include "hfedms/metrics.hpp"
#include "hfedms/stp.hpp"

using namespace hfedms;

namespace {

std::vector<LabeledExample> balanced(std::size_t classes, std::size_t per_class) {
  std::vector<LabeledExample> out;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      std::vector<double> x(classes, 0.0);
      x[c] = 1.0 + 0.1 * static_cast<double>(i);
      out.push_back({x, static_cast<int>(c)});
    }
  }
  return out;
}

DenseModel identity_model(std::size_t dim, std::size_t classes) {
  const std::size_t dims[] = {dim, dim};
  auto m = zeros_like(init_model(dims, classes, Activation::Identity, 1));
  for (std::size_t i = 0; i < dim; ++i) m.extractor.layers[0].w(i, i) = 1.0;
  return m;
}

}  // namespace

TEST_CASE("a model that always answers class 0 scores 1/F on a balanced set") {
  auto m = identity_model(4, 4);
  m.classifier.bias = {5.0, 0.0, 0.0, 0.0};
  const auto test = balanced(4, 10);
  CHECK(evaluate(m, test).accuracy == doctest::Approx(0.25));
  const auto per = class_accuracy(m, test, 5);
  CHECK(per[0] == 1.0);
  CHECK(per[1] == 0.0);
  CHECK(per[4] == -1.0);
}

TEST_CASE("zero model: uniform probabilities and loss ln F") {
  const auto m = zeros_like(identity_model(3, 3));
  const auto r = evaluate(m, balanced(3, 4));
  CHECK(r.loss == doctest::Approx(std::log(3.0)));
  // ties resolve to the first class
  CHECK(r.accuracy == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("a hand-built separator is perfect") {
  auto m = identity_model(3, 3);
  for (std::size_t i = 0; i < 3; ++i) m.classifier.w(i, i) = 1.0;
  const auto test = balanced(3, 7);
  CHECK(evaluate(m, test).accuracy == 1.0);
  CHECK_THROWS_AS(evaluate(m, {}), InvalidInput);
}

TEST_CASE("forgetting curve over snapshots") {
  const auto m = identity_model(2, 2);
  const std::vector<DenseModel> snaps(5, m);
  const auto probe = balanced(2, 3);
  const auto series = forgetting_curve(probe, snaps);
  CHECK(series.size() == 5);
  for (double v : series) CHECK(v == series[0]);
  CHECK(forgetting_curve(probe, {}).empty());
}

TEST_CASE("metrics CSV header and row formatting") {
  RoundMetrics row;
  row.round = 3;
  row.mode = "part";
  row.M = 4;
  row.acc = 0.5;
  row.loss = 1.25;
  row.bytes_up = 10;
  row.bytes_down = 20;
  row.cum_bytes = 30;
  row.sim_time_s = 0.125;
  row.median_cpd = 0.0;
  row.updated_params = 7;
  std::ostringstream out;
  const std::vector<RoundMetrics> rows{row};
  write_metrics_csv(out, rows);
  CHECK(out.str() == std::string(kMetricsHeader) + "\n3,part,4,0.5,1.25,10,20,30,0.125,0,7\n");
}

TEST_CASE("updated parameter count grows by exactly what each round synchronised") {
  ExperimentConfig c;
  c.mode = ExperimentMode::HFedMSD;
  c.K = 12;
  c.F = 3;
  c.feature_dim = 4;
  c.extractor_dims = {4, 5, 2};
  c.n = 8;
  c.test_per_class = 4;
  c.sched.R = 7;
  c.sched.T = 3;
  c.sched.beta = 4;
  c.sched.alpha = 0.5;
  const auto res = run_experiment(c);
  const auto scale = accounting_scale(c);
  std::uint64_t prev = 0, prev_cum = 0;
  for (const auto& row : res.rounds) {
    const std::uint64_t delta = row.updated_params - prev;
    CHECK(delta * 4 == row.bytes_up + row.bytes_down);
    CHECK(row.cum_bytes == prev_cum + row.bytes_up + row.bytes_down);
    const std::uint64_t unit = row.mode == "full" ? scale.full : scale.classifier;
    CHECK(delta % unit == 0);
    prev = row.updated_params;
    prev_cum = row.cum_bytes;
    CHECK(row.acc >= 0.0);
    CHECK(row.acc <= 1.0);
    CHECK(row.loss >= 0.0);
  }
}
