// hfedms: run experiments, group clients, tabulate traffic, sweep settings.
//
// Exit status: 0 success, 2 configuration or input error, 3 runtime failure.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "hfedms/config.hpp"
#include "hfedms/error.hpp"
#include "hfedms/harness.hpp"

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 3;

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::size_t> workers;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Config file (flat JSON)")->required();
  cmd->add_option("--seed", c.seed, "Override the seed");
  cmd->add_option("--mode", c.mode, "hfedms-d, hfedms-s, fedavg or static-groups");
  cmd->add_option("--workers", c.workers, "Worker threads");
  cmd->add_option("--out", c.out, "Output directory (run) or CSV file (sweep)");
}

hfedms::ExperimentConfig load_with_overrides(const Common& c) {
  auto j = hfedms::read_config_json(c.config);
  if (!j.is_object()) throw hfedms::ConfigError(c.config + ": config must be a JSON object");
  if (c.seed) j["seed"] = *c.seed;
  if (c.mode) j["mode"] = *c.mode;
  if (c.workers) j["workers"] = *c.workers;
  try {
    return hfedms::config_from_json(j);
  } catch (const hfedms::ConfigError& e) {
    throw hfedms::ConfigError(c.config + ": " + e.what());
  }
}

int cmd_run(const Common& c) {
  auto cfg = load_with_overrides(c);
  if (!c.out.empty()) {
    std::filesystem::create_directories(c.out);
    cfg.metrics_csv = (std::filesystem::path(c.out) / "metrics.csv").string();
    cfg.summary_json = (std::filesystem::path(c.out) / "summary.json").string();
  }
  const auto res = hfedms::run_with_reports(cfg);
  std::printf("final_acc=%.4f final_loss=%.4f bytes=%llu tib=%.6f hours=%.2f\n",
              res.final_eval.accuracy, res.final_eval.loss,
              static_cast<unsigned long long>(res.total_bytes()),
              hfedms::to_tib(static_cast<double>(res.total_bytes())),
              hfedms::to_hours(res.sim_seconds));
  return 0;
}

int cmd_group(const std::string& input, std::size_t groups, std::uint64_t seed,
              const std::string& out, double sigma) {
  hfedms::DistributionTable table;
  try {
    table = hfedms::read_distribution_csv(input);
  } catch (const hfedms::ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kConfigError;
  }
  const auto mmd = sigma > 0.0 ? hfedms::MmdConfig::fixed(sigma) : hfedms::MmdConfig::median();
  const auto report = hfedms::group_clients(table, groups, seed, {}, mmd);
  if (out.empty()) {
    hfedms::write_group_csv(std::cout, report.assignment, table);
  } else {
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot write " + out);
    hfedms::write_group_csv(f, report.assignment, table);
  }
  std::fprintf(stderr, "groups=%zu size=%zu idle=%zu cpd_median=%.6g cpd_q1=%.6g cpd_q3=%.6g pairs=%zu\n",
               report.assignment.groups.size(), report.assignment.group_size,
               report.assignment.idle.size(), report.cpd.median, report.cpd.q1, report.cpd.q3,
               report.cpd.pairs);
  return 0;
}

int cmd_sweep(const Common& c, const std::string& grid) {
  const auto cfg = load_with_overrides(c);
  nlohmann::json spec_json;
  if (!grid.empty() && grid.front() == '{') {
    try {
      spec_json = nlohmann::json::parse(grid);
    } catch (const nlohmann::json::parse_error& e) {
      throw hfedms::ConfigError(std::string("bad --grid: ") + e.what());
    }
  } else {
    spec_json = hfedms::read_config_json(grid);
  }
  const auto spec = hfedms::parse_sweep_spec(spec_json);
  const auto cells = hfedms::run_sweep(cfg, spec, cfg.workers);
  if (c.out.empty()) {
    hfedms::write_sweep_csv(std::cout, cells);
  } else {
    std::ofstream f(c.out);
    if (!f) throw std::runtime_error("cannot write " + c.out);
    hfedms::write_sweep_csv(f, cells);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hierarchical federated learning simulator"};
  app.require_subcommand(1);

  Common run_args;
  auto* run = app.add_subcommand("run", "Run one experiment");
  add_common(run, run_args);

  std::string group_input, group_out;
  std::size_t group_m = 1;
  std::uint64_t group_seed = 1;
  double group_sigma = 0.0;
  auto* group = app.add_subcommand("group", "Group clients from a class-count CSV");
  group->add_option("--input", group_input, "CSV with header client,count_0,...")->required();
  group->add_option("--groups", group_m, "Number of groups M")->required();
  group->add_option("--seed", group_seed, "Seed");
  group->add_option("--sigma", group_sigma, "Fixed kernel bandwidth (0: median heuristic)");
  group->add_option("--out", group_out, "Group CSV path (default stdout)");

  hfedms::TrafficQuery q;
  std::string traffic_mode = "hfedms-s";
  bool reference = false;
  hfedms::LinkModel link;
  auto* traffic = app.add_subcommand("traffic", "Closed-form traffic and link time");
  traffic->add_flag("--reference", reference, "Print the six LTE-M reference configurations");
  traffic->add_option("--mode", traffic_mode, "hfedms-s, fedavg or hfedms-d");
  traffic->add_option("--kappa", q.kappa, "Group sampling proportion");
  traffic->add_option("--clients", q.K, "Number of clients K");
  traffic->add_option("--params", q.model_params, "Model parameter count");
  traffic->add_option("--classifier-params", q.classifier_params, "Classifier parameter count");
  traffic->add_option("--rounds", q.rounds, "Rounds R");
  traffic->add_option("--period", q.T, "Full-sync period T");
  traffic->add_option("--rate-up", link.rate_up_bps, "Uplink bits per second");
  traffic->add_option("--rate-down", link.rate_down_bps, "Downlink bits per second");

  Common sweep_args;
  std::string grid;
  auto* sweep = app.add_subcommand("sweep", "Grid over growth, alpha, beta or T");
  add_common(sweep, sweep_args);
  sweep->add_option("--grid", grid, "Inline JSON or file, e.g. {\"T\":[1,3,5]}")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    if (*run) return cmd_run(run_args);
    if (*group) return cmd_group(group_input, group_m, group_seed, group_out, group_sigma);
    if (*traffic) {
      link.validate();
      std::vector<hfedms::TrafficRow> rows;
      if (reference) {
        for (const auto& ref : hfedms::reference_traffic_queries()) {
          rows.push_back(hfedms::evaluate_traffic(ref, link));
        }
      } else {
        q.mode = hfedms::parse_mode(traffic_mode);
        q.label = traffic_mode;
        if (q.rounds < 0 || q.T < 1) throw hfedms::ConfigError("rounds must be >= 0 and period >= 1");
        rows.push_back(hfedms::evaluate_traffic(q, link));
      }
      hfedms::write_traffic_table(std::cout, rows);
      return 0;
    }
    if (*sweep) return cmd_sweep(sweep_args, grid);
  } catch (const hfedms::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const hfedms::ParseError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kConfigError;
  } catch (const hfedms::InvalidInput& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return kConfigError;
  } catch (const hfedms::TrainingDiverged& e) {
    std::fprintf(stderr, "diverged: %s\n", e.what());
    return kRuntimeError;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kRuntimeError;
  }
  return 0;
}
