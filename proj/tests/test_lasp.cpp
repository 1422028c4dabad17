#include <doctest.h>

#include <cmath>

#include "hfedms/error.hpp"
#include "hfedms/lasp.hpp"
#include "hfedms/stp.hpp"

using namespace hfedms;

namespace {

ExperimentConfig tiny_config(ExperimentMode mode) {
  ExperimentConfig c;
  c.mode = mode;
  c.K = 20;
  c.F = 4;
  c.feature_dim = 6;
  c.extractor_dims = {6, 8, 3};
  c.n = 10;
  c.test_per_class = 5;
  c.sched.R = 11;
  c.sched.T = 3;
  c.sched.kappa = 0.5;
  c.sched.growth = Growth::Linear;
  c.sched.alpha = 0.01;
  c.sched.beta = 10;
  c.Q = 20;
  return c;
}

}  // namespace

TEST_CASE("a classifier relay moves 25200 bytes each way") {
  TrafficLedger ledger({6680000, 6300}, LinkModel{});
  ledger.record_sync({SyncKind::Relay, 6300}, 0, SyncMode::PartSync);
  CHECK(ledger.total_up() == 25200);
  CHECK(ledger.total_down() == 25200);
  CHECK(ledger.params_synced() == 12600);

  TrafficLedger full({6680000, 6300}, LinkModel{});
  full.record_sync({SyncKind::Relay, 6680000}, 0, SyncMode::FullSync);
  const double ratio = static_cast<double>(ledger.total_bytes()) / static_cast<double>(full.total_bytes());
  CHECK(ratio == doctest::Approx(6300.0 / 6680000.0));
  CHECK(ratio < 0.001);
}

TEST_CASE("event directions") {
  TrafficLedger l({10, 2}, LinkModel{});
  l.record_sync({SyncKind::Pull, 10}, 0, SyncMode::FullSync);
  CHECK(l.total_down() == 40);
  CHECK(l.total_up() == 0);
  l.record_sync({SyncKind::Push, 10}, 0, SyncMode::FullSync);
  CHECK(l.total_up() == 40);
  l.record_sync({SyncKind::Scatter, 10}, 0, SyncMode::FullSync);
  CHECK(l.total_down() == 80);
  l.record_chain(3, 1, SyncMode::PartSync);
  // pull + 2 relays + push = 4 transfers each way counted over both directions: 8 * 2 params
  CHECK(l.round_totals(1).bytes_up + l.round_totals(1).bytes_down == 8 * 2 * 3);
  CHECK(l.round_totals(7).bytes_up == 0);
  CHECK(l.entries().size() == 2);
}

TEST_CASE("ledger rejects inconsistent events") {
  TrafficLedger l({10, 2}, LinkModel{});
  CHECK_THROWS_AS(l.record_sync({SyncKind::Relay, 0}, 0, SyncMode::FullSync), InvalidInput);
  CHECK_THROWS_AS(l.record_sync({SyncKind::Relay, 10}, 0, SyncMode::PartSync), InvalidInput);
  CHECK_THROWS_AS(l.record_sync({SyncKind::Relay, 2}, 0, SyncMode::FullSync), InvalidInput);
  l.record_sync({SyncKind::Relay, 10}, 3, SyncMode::FullSync);
  CHECK_THROWS_AS(l.record_sync({SyncKind::Relay, 10}, 2, SyncMode::FullSync), InvalidInput);
  CHECK_THROWS_AS(l.record_sync({SyncKind::Relay, 2}, 3, SyncMode::PartSync), InvalidInput);
  CHECK_THROWS_AS(l.record_chain(0, 4, SyncMode::FullSync), InvalidInput);
  CHECK_THROWS_AS(TrafficLedger({10, 20}, LinkModel{}), InvalidInput);
  CHECK_THROWS_AS(TrafficLedger({10, 2}, LinkModel{0.0, 1.0, 4}), InvalidInput);
}

TEST_CASE("closed-form totals") {
  CHECK(closed_form_traffic_d(1, 2, 10, 2, 4, 2) == 544.0);
  const double s = closed_form_traffic_s(0.3, 368, 6.68e6, 32);
  CHECK(s == doctest::Approx(1.88793e11).epsilon(1e-5));
  CHECK(to_tib(s) == doctest::Approx(0.172).epsilon(0.005));
  const double fedavg = closed_form_traffic_s(0.3, 368, 6.68e6, 490);
  CHECK(fedavg == doctest::Approx(2.8911e12).epsilon(1e-4));
  CHECK(to_tib(fedavg) == doctest::Approx(2.629).epsilon(0.005));
  CHECK(closed_form_traffic_d(0.3, 368, 6.68e6, 6.3e3, 34, 5) == doctest::Approx(6.2098e10).epsilon(1e-4));
  CHECK(closed_form_traffic_d(0.3, 368, 6.68e6, 6.3e3, 81, 9) == doctest::Approx(8.0048e10).epsilon(1e-4));
  CHECK(closed_form_traffic_s(0.3, 368, 6.68e6, 0) == 0.0);
  CHECK(closed_form_traffic_d(0.3, 368, 6.68e6, 6.3e3, 0, 5) == 0.0);
  CHECK_THROWS_AS(closed_form_traffic_d(1, 1, 1, 1, 4, 0), InvalidInput);
  // T = 1 is three model transfers per client per round
  CHECK(closed_form_traffic_d(1, 2, 10, 2, 4, 1) == 4.0 * 2 * 3 * 10 * 4);
}

TEST_CASE("runtime model") {
  const LinkModel link;
  CHECK(runtime_estimate(1.88793e11, link) == doctest::Approx(2.967e5).epsilon(1e-3));
  CHECK(to_hours(runtime_estimate(1.88793e11, link)) == doctest::Approx(82).epsilon(0.01));
  CHECK(to_hours(runtime_estimate(2.8911e12, link)) == doctest::Approx(1262).epsilon(0.01));
  const LinkModel sym{5e6, 5e6, 4};
  CHECK(runtime_estimate(1000, sym) == doctest::Approx(8000.0 / 5e6));
  CHECK(directional_runtime(1000, 0, link) == doctest::Approx(8000.0 / 4e6));
  double prev = 0.0;
  for (double b : {1.0, 10.0, 1e3, 1e9}) {
    CHECK(runtime_estimate(b, link) > prev);
    prev = runtime_estimate(b, link);
  }
}

TEST_CASE("simulated every-round sync books exactly 8 kappa K M R bytes") {
  const auto cfg = tiny_config(ExperimentMode::HFedMSS);
  Simulation sim(cfg);
  const auto res = sim.run();
  const auto scale = accounting_scale(cfg);
  const double expect = closed_form_traffic_s(cfg.sched.kappa, static_cast<double>(cfg.K),
                                              static_cast<double>(scale.full), cfg.sched.R);
  CHECK(static_cast<double>(res.total_bytes()) == expect);
}

TEST_CASE("simulated periodic sync books exactly the periodic closed form") {
  const auto cfg = tiny_config(ExperimentMode::HFedMSD);
  Simulation sim(cfg);
  std::uint64_t prev = 0;
  const auto scale = accounting_scale(cfg);
  while (!sim.done()) {
    const auto out = sim.step();
    const auto& row = sim.metrics().back();
    CHECK(row.cum_bytes >= prev);
    prev = row.cum_bytes;
    if (out.mode == SyncMode::PartSync) {
      // classifier-only rounds: 8 bytes per classifier parameter for each of the kappa K clients
      CHECK(row.bytes_up + row.bytes_down == 8 * 10 * scale.classifier);
    }
  }
  const double expect = closed_form_traffic_d(cfg.sched.kappa, static_cast<double>(cfg.K),
                                              static_cast<double>(scale.full),
                                              static_cast<double>(scale.classifier), cfg.sched.R,
                                              cfg.sched.T);
  CHECK(static_cast<double>(sim.ledger().total_bytes()) == expect);
}
