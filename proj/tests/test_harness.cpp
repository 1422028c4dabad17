#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "hfedms/error.hpp"
#include "hfedms/harness.hpp"

using namespace hfedms;
namespace fs = std::filesystem;

namespace {

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("hfedms_harness_" + name);
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig tiny(ExperimentMode mode) {
  ExperimentConfig c;
  c.mode = mode;
  c.K = 12;
  c.F = 3;
  c.feature_dim = 4;
  c.extractor_dims = {4, 5, 2};
  c.n = 8;
  c.test_per_class = 5;
  c.sched.R = 6;
  c.sched.T = 3;
  c.sched.beta = 4;
  c.sched.alpha = 0.5;
  c.sched.growth = Growth::Linear;
  c.sched.kappa = 0.5;
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(HFEDMS_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("the full-scale preset loads with the documented defaults") {
  const auto c = load_config(fs::path(HFEDMS_CONFIG_DIR) / "full.cfg");
  CHECK(c.K == 368);
  CHECK(c.sched.lr == 0.01);
  CHECK(c.sched.minibatch == 5);
  CHECK(c.sched.local_epochs == 1);
  CHECK(c.sched.R == 500);
  CHECK(c.sched.T == 5);
  CHECK(c.Q == 200);
  CHECK(c.sched.kappa == 0.3);
  CHECK(c.sched.growth == Growth::Log);
  CHECK(c.sched.alpha == 2.0);
  CHECK(c.sched.beta == 10);
  CHECK(c.n == 50);
  CHECK_NOTHROW(load_config(fs::path(HFEDMS_CONFIG_DIR) / "small.cfg"));
}

TEST_CASE("config errors name the key, the type problem or the path") {
  try {
    config_from_json(nlohmann::json::parse(R"({"K": 10, "kapa": 0.3})"));
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("kapa") != std::string::npos);
  }
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"K": "ten"})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"growth": "cubic"})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(nlohmann::json::parse(R"({"mode": "hfedms-s", "scc": true})")),
                  ConfigError);
  try {
    load_config("/nonexistent/dir/missing.cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("/nonexistent/dir/missing.cfg") != std::string::npos);
  }
}

TEST_CASE("config survives a JSON round trip") {
  auto c = tiny(ExperimentMode::HFedMSD);
  c.scc = true;
  c.probe_round = 2;
  c.rate_up_bps = 1e6;
  const auto back = config_from_json(to_json(c));
  CHECK(to_json(back) == to_json(c));
  CHECK(back.scc == std::optional<bool>(true));
  CHECK(back.sched.R == 6);
}

TEST_CASE("identical config and seed give byte-identical reports") {
  auto c = tiny(ExperimentMode::HFedMSD);
  c.seed = 42;
  c.metrics_csv = temp_path("a.csv").string();
  c.summary_json = temp_path("a.json").string();
  run_with_reports(c);
  c.metrics_csv = temp_path("b.csv").string();
  c.summary_json = temp_path("b.json").string();
  run_with_reports(c);
  const auto a = read_text(temp_path("a.csv"));
  CHECK(a.rfind(kMetricsHeader, 0) == 0);
  CHECK(a == read_text(temp_path("b.csv")));
  const auto summary = nlohmann::json::parse(read_text(temp_path("a.json")));
  CHECK(summary.contains("final_acc"));
  CHECK(summary.contains("estimated_hours"));
  CHECK(summary["config"]["seed"] == 42);
  for (const char* f : {"a.csv", "b.csv", "a.json", "b.json"}) fs::remove(temp_path(f));
}

TEST_CASE("two identical pairs are split across the two groups") {
  std::istringstream in("client,c0,c1\na,9,1\nb,9,1\nc,1,9\nd,1,9\n");
  const auto table = parse_distribution_csv(in, "pairs");
  const auto rep = group_clients(table, 2, 3, IcgOptions{}, MmdConfig::median());
  REQUIRE(rep.assignment.groups.size() == 2);

  std::vector<Point> dists;
  for (const auto& row : table.counts) dists.push_back({row[0] / 10.0, row[1] / 10.0});
  double best = INFINITY;
  const std::vector<std::vector<std::vector<int>>> pairings{
      {{0, 1}, {2, 3}}, {{0, 2}, {1, 3}}, {{0, 3}, {1, 2}}};
  for (const auto& p : pairings) best = std::min(best, grouping_quality(p, dists, MmdConfig::median()).median);
  CHECK(rep.cpd.median == best);
  for (const auto& g : rep.assignment.groups) {
    REQUIRE(g.size() == 2);
    CHECK((g[0] < 2) != (g[1] < 2));
  }
  std::ostringstream out;
  write_group_csv(out, rep.assignment, table);
  CHECK(out.str().rfind("group,position,client\n", 0) == 0);
}

TEST_CASE("M = K gives singleton groups; bad rows report their line") {
  std::istringstream in("client,c0,c1,c2\na,1,2,3\nb,3,2,1\nc,0,0,5\n");
  const auto table = parse_distribution_csv(in, "t");
  const auto rep = group_clients(table, 3, 1, IcgOptions{}, MmdConfig::median());
  for (const auto& g : rep.assignment.groups) CHECK(g.size() == 1);

  std::istringstream bad("client,c0,c1\na,1,2\nb,1\n");
  try {
    parse_distribution_csv(bad, "bad");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  std::istringstream neg("client,c0,c1\na,1,-2\n");
  CHECK_THROWS_AS(parse_distribution_csv(neg, "neg"), ParseError);
}

TEST_CASE("traffic table for the reference configurations") {
  const LinkModel link;
  const auto queries = reference_traffic_queries();
  REQUIRE(queries.size() == 6);
  std::vector<TrafficRow> rows;
  for (const auto& q : queries) rows.push_back(evaluate_traffic(q, link));
  const auto& s = rows[1];
  CHECK(s.query.rounds == 32);
  CHECK(s.tib == doctest::Approx(0.172).epsilon(0.005));
  CHECK(s.hours == doctest::Approx(82).epsilon(0.01));
  const auto& t7 = rows[4];
  CHECK(t7.query.T == 7);
  CHECK(t7.tib == doctest::Approx(0.081).epsilon(0.005));

  TrafficQuery zero = queries[1];
  zero.rounds = 0;
  const auto z = evaluate_traffic(zero, link);
  CHECK(z.bytes == 0.0);
  CHECK(z.hours == 0.0);

  std::ostringstream out;
  write_traffic_table(out, rows);
  const auto table = out.str();
  CHECK(std::count(table.begin(), table.end(), '\n') == 7);
}

TEST_CASE("a 1x1 sweep reproduces a single run") {
  const auto base = tiny(ExperimentMode::HFedMSD);
  const auto spec = parse_sweep_spec(nlohmann::json::parse(R"({"T": [3]})"));
  const auto cells = run_sweep(base, spec, 1);
  REQUIRE(cells.size() == 1);
  REQUIRE(cells[0].ok);
  const auto res = run_experiment(base);
  CHECK(cells[0].final_acc == res.final_eval.accuracy);
  CHECK(cells[0].final_loss == res.final_eval.loss);
  CHECK(cells[0].ledger_bytes == res.total_bytes());
}

TEST_CASE("sweep grid shape, closed forms and the T = 1 cell") {
  const auto base = tiny(ExperimentMode::HFedMSS);
  const auto grid = parse_sweep_spec(nlohmann::json::parse(R"({"alpha": [0.5, 1.0], "beta": [2, 4]})"));
  const auto cfgs = expand_sweep(base, grid);
  REQUIRE(cfgs.size() == 4);
  CHECK(cfgs[1].sched.beta == 4);
  CHECK(cfgs[2].sched.alpha == 1.0);
  std::ostringstream csv;
  write_sweep_csv(csv, run_sweep(base, grid, 2));
  const auto text = csv.str();
  CHECK(std::count(text.begin(), text.end(), '\n') == 5);

  auto periodic = tiny(ExperimentMode::HFedMSD);
  periodic.sched.R = 9;
  periodic.sched.alpha = 0.01;  // M stays at beta = 6, so kappa K clients train every round
  periodic.sched.beta = 6;
  const auto tspec = parse_sweep_spec(nlohmann::json::parse(R"({"T": [1, 3, 5, 7, 9]})"));
  const auto cells = run_sweep(periodic, tspec, 1);
  REQUIRE(cells.size() == 5);
  CHECK(cells[0].config.mode == ExperimentMode::HFedMSS);
  for (const auto& cell : cells) {
    REQUIRE(cell.ok);
    CHECK(static_cast<double>(cell.ledger_bytes) == cell.closed_form_bytes);
  }
  CHECK(cells[1].ledger_bytes > cells[4].ledger_bytes);
  CHECK_THROWS_AS(parse_sweep_spec(nlohmann::json::parse(R"({"gamma": [1]})")), ConfigError);
}

TEST_CASE("failing sweep cells are recorded and the sweep continues") {
  const auto base = tiny(ExperimentMode::HFedMSD);
  const auto spec = parse_sweep_spec(nlohmann::json::parse(R"({"alpha": [0.5, -1.0]})"));
  auto cells = run_sweep(base, spec, 1);
  REQUIRE(cells.size() == 2);
  CHECK(cells[0].ok);
  CHECK_FALSE(cells[1].ok);
  CHECK_FALSE(cells[1].error.empty());
}

TEST_CASE("command-line exit codes") {
  CHECK(run_cli("run --config /nonexistent.cfg") == 2);
  const auto bad = temp_path("bad.cfg");
  write_text(bad, R"({"K": 10, "bogus_key": 1})");
  CHECK(run_cli("run --config " + bad.string()) == 2);
  fs::remove(bad);
  CHECK(run_cli("traffic --reference") == 0);
  CHECK(run_cli("traffic --mode hfedms-d --rounds 34 --period 5") == 0);
  CHECK(run_cli("frobnicate") == 2);

  const auto cfg = temp_path("ok.cfg");
  write_text(cfg, to_json(tiny(ExperimentMode::HFedMSD)).dump());
  const auto out = temp_path("out");
  fs::remove_all(out);
  CHECK(run_cli("run --config " + cfg.string() + " --seed 5 --out " + out.string()) == 0);
  CHECK(fs::exists(out / "metrics.csv"));
  CHECK(fs::exists(out / "summary.json"));
  fs::remove_all(out);
  fs::remove(cfg);
}
