#include <doctest.h>

#include <atomic>
#include <cmath>
#include <set>
#include <stdexcept>

#include "hfedms/error.hpp"
#include "hfedms/stp.hpp"

using namespace hfedms;

namespace {

ExperimentConfig small(ExperimentMode mode) {
  ExperimentConfig c;
  c.mode = mode;
  c.K = 16;
  c.F = 4;
  c.feature_dim = 5;
  c.extractor_dims = {5, 6, 3};
  c.n = 10;
  c.test_per_class = 10;
  c.sched.R = 8;
  c.sched.T = 4;
  c.sched.beta = 4;
  c.sched.alpha = 1.0;
  c.sched.kappa = 0.5;
  c.Q = 30;
  return c;
}

std::vector<LabeledExample> gaussian_batch(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<LabeledExample> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].features = {normal(rng), normal(rng), normal(rng)};
    out[i].label = static_cast<int>(i % 2);
  }
  return out;
}

}  // namespace

TEST_CASE("group count follows the growth functions") {
  // LOG, alpha 2, beta 10: f at cycle 1 is 1, at cycle 3 floor(2 ln 3 + 1) = 3
  CHECK(group_count(Growth::Log, 2, 10, 5, 5, 368) == 10);
  CHECK(group_count(Growth::Log, 2, 10, 5, 15, 368) == 30);
  CHECK(group_count(Growth::Linear, 1, 10, 5, 15, 368) == 30);
  CHECK(group_count(Growth::Exp, 1, 10, 5, 20, 368) == 80);
  CHECK(group_count(Growth::Exp, 1, 10, 5, 50, 368) == 368);  // clamped to K
  CHECK(group_count(Growth::Linear, 0.1, 1, 1, 1, 5) == 1);
  CHECK_THROWS_AS(group_count(Growth::Log, 2, 10, 5, 0, 368), InvalidInput);
  CHECK_THROWS_AS(group_count(Growth::Log, 2, 10, 5, 7, 368), InvalidInput);
  CHECK_THROWS_AS(group_count(Growth::Log, 0, 10, 5, 5, 368), InvalidInput);
  for (Growth g : {Growth::Linear, Growth::Log, Growth::Exp}) {
    std::size_t prev = 0;
    for (long r = 3; r <= 300; r += 3) {
      const auto m = group_count(g, 0.7, 4, 3, r, 200);
      CHECK(m >= prev);
      prev = m;
    }
  }
}

TEST_CASE("selected group count") {
  CHECK(selected_group_count(0.3, 10) == 3);
  CHECK(selected_group_count(0.3, 11) == 4);
  CHECK(selected_group_count(0.01, 10) == 1);
  CHECK(selected_group_count(1.0, 7) == 7);
  CHECK_THROWS_AS(selected_group_count(0.3, 0), InvalidInput);
  CHECK(growth_round(0, 5) == 5);
  CHECK(growth_round(7, 5) == 10);
  CHECK(is_full_sync_round(10, 5));
  CHECK_FALSE(is_full_sync_round(11, 5));
}

TEST_CASE("a chain with lr 0 returns its start model") {
  const std::size_t dims[] = {3, 2};
  const auto start = init_model(dims, 2, Activation::Identity, 1);
  const std::vector<std::vector<LabeledExample>> batches{gaussian_batch(6, 1), gaussian_batch(6, 2)};
  const std::vector<int> ids{4, 9};
  ChainOptions opt;
  opt.train.lr = 0.0;
  CHECK(train_chain(start, batches, ids, opt) == start);
}

TEST_CASE("a chain equals sequential SGD over the concatenated client batches") {
  const std::size_t dims[] = {3, 4, 2};
  const auto start = init_model(dims, 2, Activation::ReLU, 3);
  const std::vector<std::vector<LabeledExample>> batches{gaussian_batch(7, 1), gaussian_batch(5, 2),
                                                         gaussian_batch(9, 3)};
  const std::vector<int> ids{0, 1, 2};
  ChainOptions opt;
  opt.train = TrainOptions{0.05, 3, false};
  opt.local_epochs = 2;
  opt.seed = 17;
  opt.round = 4;
  opt.group = 1;
  const auto chained = train_chain(start, batches, ids, opt);

  DenseModel manual = start;
  for (std::size_t i = 0; i < batches.size(); ++i) {
    Rng rng = make_rng(17, StreamTag::Train, 4, 1, i);
    for (int e = 0; e < 2; ++e) train_one_epoch(manual, batches[i], opt.train, rng);
  }
  CHECK(chained == manual);
}

TEST_CASE("aggregation is the element-wise mean") {
  const std::size_t dims[] = {2, 2};
  const std::vector<DenseModel> ms{init_model(dims, 2, Activation::Identity, 1),
                                   init_model(dims, 2, Activation::Identity, 2),
                                   init_model(dims, 2, Activation::Identity, 3)};
  const auto mean = aggregate(ms);
  const auto a = flatten(ms[0]), b = flatten(ms[1]), c = flatten(ms[2]);
  const auto got = flatten(mean);
  for (std::size_t i = 0; i < got.values.size(); ++i) {
    CHECK(got.values[i] == doctest::Approx((a.values[i] + b.values[i] + c.values[i]) / 3.0));
  }
  CHECK_THROWS_AS(aggregate({}), InvalidInput);
}

TEST_CASE("R = T gives one full round and T - 1 calibration rounds") {
  auto c = small(ExperimentMode::HFedMSD);
  c.sched.R = c.sched.T;
  const auto res = run_experiment(c);
  CHECK(res.full_sync_rounds == 1);
  CHECK(res.calibration_rounds == static_cast<std::size_t>(c.sched.T - 1));
  CHECK(res.rounds.size() == static_cast<std::size_t>(c.sched.T));
  CHECK(res.rounds[0].mode == "full");
  CHECK(res.rounds[1].mode == "part");
}

TEST_CASE("calibration rounds freeze the extractor and keep the groups") {
  Simulation sim(small(ExperimentMode::HFedMSD));
  const auto first = sim.step();
  const auto extractor = sim.global_model().extractor;
  const auto groups = sim.groups().groups;
  for (int r = 1; r < 4; ++r) {
    const auto out = sim.step();
    CHECK(out.mode == SyncMode::PartSync);
    CHECK(sim.global_model().extractor == extractor);
    CHECK(sim.groups().groups == groups);
    CHECK(out.selected_groups == first.selected_groups);
  }
  const auto next = sim.step();
  CHECK(next.mode == SyncMode::FullSync);
  CHECK_FALSE(sim.global_model().extractor == extractor);
}

TEST_CASE("groups partition the sampled clients") {
  Simulation sim(small(ExperimentMode::HFedMSS));
  const auto out = sim.step();
  std::set<int> seen;
  std::size_t total = 0;
  for (const auto& g : sim.groups().groups) {
    for (int c : g) seen.insert(c);
    total += g.size();
  }
  for (int c : sim.groups().idle) seen.insert(c);
  total += sim.groups().idle.size();
  CHECK(total == 16);
  CHECK(seen.size() == 16);
  CHECK(out.M == 4);
  CHECK(out.selected_groups.size() == 2);
}

TEST_CASE("periodic sync with T = 1 trains exactly like every-round sync") {
  auto d = small(ExperimentMode::HFedMSD);
  d.sched.T = 1;
  d.sched.R = 4;
  auto s = d;
  s.mode = ExperimentMode::HFedMSS;
  const auto rd = run_experiment(d);
  const auto rs = run_experiment(s);
  REQUIRE(rd.rounds.size() == rs.rounds.size());
  for (std::size_t i = 0; i < rd.rounds.size(); ++i) {
    CHECK(rd.rounds[i].acc == rs.rounds[i].acc);
    CHECK(rd.rounds[i].loss == rs.rounds[i].loss);
    CHECK(rd.rounds[i].M == rs.rounds[i].M);
    CHECK(rd.rounds[i].median_cpd == rs.rounds[i].median_cpd);
  }
  CHECK(rd.final_model == rs.final_model);
  // the periodic variant also books the scatter after each aggregation
  CHECK(rd.total_bytes() * 2 == rs.total_bytes() * 3);
}

TEST_CASE("worker count does not change results") {
  auto c = small(ExperimentMode::HFedMSD);
  c.workers = 1;
  const auto a = run_experiment(c);
  c.workers = 3;
  const auto b = run_experiment(c);
  CHECK(a.final_model == b.final_model);
  REQUIRE(a.rounds.size() == b.rounds.size());
  for (std::size_t i = 0; i < a.rounds.size(); ++i) {
    CHECK(a.rounds[i].acc == b.rounds[i].acc);
    CHECK(a.rounds[i].cum_bytes == b.rounds[i].cum_bytes);
  }
}

TEST_CASE("federated averaging learns an i.i.d. problem") {
  ExperimentConfig c;
  c.mode = ExperimentMode::FedAvg;
  c.K = 20;
  c.F = 4;
  c.feature_dim = 5;
  c.extractor_dims = {5, 8};
  c.skew = 100.0;
  c.class_sep = 3.0;
  c.n = 20;
  c.test_per_class = 50;
  c.sched.R = 30;
  c.sched.lr = 0.05;
  c.sched.kappa = 0.5;
  const auto res = run_experiment(c);
  CHECK(res.final_eval.accuracy >= 0.9);
  CHECK(res.rounds.back().M == 20);
  CHECK(res.full_sync_rounds == 30);
}

TEST_CASE("static groups are formed once") {
  auto c = small(ExperimentMode::StaticGroups);
  c.sched.R = 3;
  Simulation sim(c);
  sim.step();
  const auto groups = sim.groups().groups;
  sim.step();
  sim.step();
  CHECK(sim.groups().groups == groups);
}

TEST_CASE("invalid combinations are rejected") {
  auto c = small(ExperimentMode::HFedMSS);
  c.scc = true;
  CHECK_THROWS_AS(Simulation{c}, ConfigError);
  auto k = small(ExperimentMode::HFedMSS);
  k.sched.kappa = 0.01;
  CHECK_THROWS_AS(Simulation{k}, ConfigError);
  auto dims = small(ExperimentMode::HFedMSS);
  dims.extractor_dims = {4, 3};
  CHECK_THROWS_AS(Simulation{dims}, ConfigError);
}

TEST_CASE("stepping past the end throws") {
  auto c = small(ExperimentMode::HFedMSS);
  c.sched.R = 1;
  Simulation sim(c);
  sim.step();
  CHECK(sim.done());
  CHECK_THROWS_AS(sim.step(), std::logic_error);
}

TEST_CASE("divergence reports round, group and client") {
  auto c = small(ExperimentMode::HFedMSS);
  c.sched.lr = 1e300;
  c.class_sep = 1e150;
  try {
    run_experiment(c);
    FAIL("expected divergence");
  } catch (const TrainingDiverged& e) {
    CHECK(e.round() >= 0);
    CHECK(e.group() >= 0);
    CHECK(e.client() >= 0);
    CHECK(std::string(e.what()).find("round") != std::string::npos);
  }
}

TEST_CASE("parallel_for runs every task and rethrows the lowest failing index") {
  std::atomic<int> count{0};
  parallel_for(50, 4, [&](std::size_t) { ++count; });
  CHECK(count == 50);
  try {
    parallel_for(20, 4, [](std::size_t i) {
      if (i == 7 || i == 13) throw std::runtime_error("task " + std::to_string(i));
    });
    FAIL("expected exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()) == "task 7");
  }
}
