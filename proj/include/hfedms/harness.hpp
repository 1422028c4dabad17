#pragma once

// Orchestration behind the command-line tool: experiment runs with report
// files, standalone grouping, closed-form traffic tables and parameter sweeps.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "hfedms/config.hpp"
#include "hfedms/icg.hpp"
#include "hfedms/lasp.hpp"
#include "hfedms/stp.hpp"

namespace hfedms {

// Summary document: final metrics, traffic totals and the resolved config.
nlohmann::json make_summary(const ExperimentConfig& config, const ExperimentResult& result);

// Runs the experiment and writes the metrics CSV and summary JSON when the
// config names them.
ExperimentResult run_with_reports(const ExperimentConfig& config);

// ---- grouping ------------------------------------------------------------------

struct DistributionTable {
  std::vector<std::string> clients;
  std::vector<Point> counts;  // raw per-class counts
};

// Header `client,count_0,...`; throws ParseError with the line on bad rows.
DistributionTable read_distribution_csv(const std::filesystem::path& path);
DistributionTable parse_distribution_csv(std::istream& in, const std::string& source);

struct GroupingReport {
  GroupAssignment assignment;
  CpdSummary cpd;
};

GroupingReport group_clients(const DistributionTable& table, std::size_t num_groups,
                             std::uint64_t seed, const IcgOptions& options, const MmdConfig& mmd);

// `group,position,client` rows, client names taken from `table`.
void write_group_csv(std::ostream& out, const GroupAssignment& assignment,
                     const DistributionTable& table);

// ---- closed-form traffic ------------------------------------------------------------

struct TrafficQuery {
  std::string label;
  ExperimentMode mode = ExperimentMode::HFedMSS;
  double kappa = 0.3;
  double K = 368;
  double model_params = 6.68e6;
  double classifier_params = 6.3e3;
  long rounds = 0;
  long T = 1;
};

struct TrafficRow {
  TrafficQuery query;
  double bytes = 0.0;
  double tib = 0.0;
  double hours = 0.0;
};

TrafficRow evaluate_traffic(const TrafficQuery& q, const LinkModel& link);

// The six LTE-M reference configurations: FedAvg R=490, sequential-parallel
// R=32, and periodic sync with T = 3, 5, 7, 9.
std::vector<TrafficQuery> reference_traffic_queries();

void write_traffic_table(std::ostream& out, const std::vector<TrafficRow>& rows);

// ---- sweeps ----------------------------------------------------------------------

// JSON object mapping any of "growth", "alpha", "beta", "T" to arrays.
struct SweepSpec {
  std::vector<Growth> growth;
  std::vector<double> alpha;
  std::vector<int> beta;
  std::vector<int> T;
};

SweepSpec parse_sweep_spec(const nlohmann::json& j);

struct SweepCell {
  ExperimentConfig config;
  bool ok = false;
  std::string error;
  double final_acc = 0.0;
  double final_loss = 0.0;
  std::uint64_t ledger_bytes = 0;
  double closed_form_bytes = 0.0;
  double tib = 0.0;
  double hours = 0.0;
};

// Cell configs in row-major order over (growth, alpha, beta, T). A
// periodic-sync cell with T = 1 runs as the every-round variant.
std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& base, const SweepSpec& spec);

// Runs every cell; failures are recorded per cell. With workers > 1 cells run
// in parallel and each cell trains single-threaded.
std::vector<SweepCell> run_sweep(const ExperimentConfig& base, const SweepSpec& spec,
                                 std::size_t workers);

void write_sweep_csv(std::ostream& out, const std::vector<SweepCell>& cells);

// Closed-form traffic for the mode and schedule of `config`.
double closed_form_bytes(const ExperimentConfig& config);

}  // namespace hfedms
