#include "hfedms/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "hfedms/error.hpp"

namespace hfedms {

using nlohmann::json;

double closed_form_bytes(const ExperimentConfig& config) {
  const auto scale = accounting_scale(config);
  const double K = static_cast<double>(config.K);
  const double kappa = config.sched.kappa;
  if (config.mode == ExperimentMode::HFedMSD) {
    return closed_form_traffic_d(kappa, K, static_cast<double>(scale.full),
                                 static_cast<double>(scale.classifier), config.sched.R,
                                 config.sched.T);
  }
  return closed_form_traffic_s(kappa, K, static_cast<double>(scale.full), config.sched.R);
}

json make_summary(const ExperimentConfig& config, const ExperimentResult& result) {
  const LinkModel link{config.rate_up_bps, config.rate_down_bps, config.bytes_per_param};
  const double total = static_cast<double>(result.total_bytes());
  json j;
  j["final_acc"] = result.final_eval.accuracy;
  j["final_loss"] = result.final_eval.loss;
  j["bytes_up"] = result.bytes_up;
  j["bytes_down"] = result.bytes_down;
  j["total_bytes"] = result.total_bytes();
  j["total_tib"] = to_tib(total);
  j["estimated_hours"] = to_hours(result.sim_seconds);
  j["directional_hours"] = to_hours(directional_runtime(static_cast<double>(result.bytes_up),
                                                        static_cast<double>(result.bytes_down),
                                                        link));
  j["closed_form_bytes"] = closed_form_bytes(config);
  j["params_total"] = result.scale.full;
  j["params_classifier"] = result.scale.classifier;
  j["full_sync_rounds"] = result.full_sync_rounds;
  j["calibration_rounds"] = result.calibration_rounds;
  j["compensation_skips"] = result.compensation_skips;
  if (!result.probe.series.empty()) {
    j["probe_round"] = result.probe.probe_round;
    j["probe_size"] = result.probe.batch.size();
    j["probe_series"] = result.probe.series;
  }
  j["config"] = to_json(config);
  return j;
}

ExperimentResult run_with_reports(const ExperimentConfig& config) {
  Simulation sim(config);
  auto result = sim.run();
  const auto& resolved = sim.config();
  if (!resolved.metrics_csv.empty()) write_metrics_csv(resolved.metrics_csv, result.rounds);
  if (!resolved.summary_json.empty()) {
    std::ofstream out(resolved.summary_json, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + resolved.summary_json);
    out << make_summary(resolved, result).dump(2) << '\n';
  }
  return result;
}

// ---- grouping ------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

DistributionTable parse_distribution_csv(std::istream& in, const std::string& source) {
  DistributionTable table;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (width == 0) {
      if (cells.size() < 2 || cells[0] != "client") {
        throw ParseError(source, lineno, "expected header client,count_0,...");
      }
      width = cells.size();
      continue;
    }
    if (cells.size() != width) {
      throw ParseError(source, lineno,
                       "expected " + std::to_string(width) + " fields, got " +
                           std::to_string(cells.size()));
    }
    Point counts;
    for (std::size_t c = 1; c < cells.size(); ++c) {
      std::size_t used = 0;
      double v = 0.0;
      try {
        v = std::stod(cells[c], &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used != cells[c].size() || cells[c].empty() || !std::isfinite(v) || v < 0.0) {
        throw ParseError(source, lineno, "bad count '" + cells[c] + "'");
      }
      counts.push_back(v);
    }
    table.clients.push_back(cells[0]);
    table.counts.push_back(std::move(counts));
  }
  if (width == 0) throw ParseError(source, lineno == 0 ? 1 : lineno, "missing header");
  if (table.clients.empty()) throw ParseError(source, lineno, "no client rows");
  return table;
}

DistributionTable read_distribution_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_distribution_csv(in, path.string());
}

GroupingReport group_clients(const DistributionTable& table, std::size_t num_groups,
                             std::uint64_t seed, const IcgOptions& options, const MmdConfig& mmd) {
  std::vector<Point> normalized;
  for (const auto& row : table.counts) {
    double sum = 0.0;
    for (double v : row) sum += v;
    Point p = row;
    if (sum > 0.0) {
      for (double& v : p) v /= sum;
    }
    normalized.push_back(std::move(p));
  }
  std::vector<int> ids(table.clients.size());
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
  GroupingReport report;
  report.assignment = inter_cluster_grouping(ids, normalized, num_groups, seed, 0, options);
  report.cpd = grouping_quality(report.assignment.groups, normalized, mmd);
  return report;
}

void write_group_csv(std::ostream& out, const GroupAssignment& assignment,
                     const DistributionTable& table) {
  out << "group,position,client\n";
  for (std::size_t g = 0; g < assignment.groups.size(); ++g) {
    for (std::size_t p = 0; p < assignment.groups[g].size(); ++p) {
      out << g << ',' << p << ','
          << table.clients[static_cast<std::size_t>(assignment.groups[g][p])] << '\n';
    }
  }
}

// ---- closed-form traffic ------------------------------------------------------------

TrafficRow evaluate_traffic(const TrafficQuery& q, const LinkModel& link) {
  TrafficRow row;
  row.query = q;
  if (q.mode == ExperimentMode::HFedMSD) {
    row.bytes = closed_form_traffic_d(q.kappa, q.K, q.model_params, q.classifier_params, q.rounds, q.T);
  } else {
    row.bytes = closed_form_traffic_s(q.kappa, q.K, q.model_params, static_cast<double>(q.rounds));
  }
  row.tib = to_tib(row.bytes);
  row.hours = to_hours(runtime_estimate(row.bytes, link));
  return row;
}

std::vector<TrafficQuery> reference_traffic_queries() {
  std::vector<TrafficQuery> q;
  q.push_back({"fedavg", ExperimentMode::FedAvg, 0.3, 368, 6.68e6, 6.3e3, 490, 1});
  q.push_back({"hfedms-s", ExperimentMode::HFedMSS, 0.3, 368, 6.68e6, 6.3e3, 32, 1});
  q.push_back({"hfedms-d T=3", ExperimentMode::HFedMSD, 0.3, 368, 6.68e6, 6.3e3, 36, 3});
  q.push_back({"hfedms-d T=5", ExperimentMode::HFedMSD, 0.3, 368, 6.68e6, 6.3e3, 34, 5});
  q.push_back({"hfedms-d T=7", ExperimentMode::HFedMSD, 0.3, 368, 6.68e6, 6.3e3, 67, 7});
  q.push_back({"hfedms-d T=9", ExperimentMode::HFedMSD, 0.3, 368, 6.68e6, 6.3e3, 81, 9});
  return q;
}

void write_traffic_table(std::ostream& out, const std::vector<TrafficRow>& rows) {
  out << "label,mode,kappa,K,params,classifier_params,rounds,T,bytes,tib,hours\n";
  char buf[512];
  for (const auto& r : rows) {
    const auto& q = r.query;
    std::snprintf(buf, sizeof buf, "%s,%s,%g,%g,%g,%g,%ld,%ld,%.6e,%.4f,%.2f\n", q.label.c_str(),
                  to_string(q.mode).c_str(), q.kappa, q.K, q.model_params, q.classifier_params,
                  q.rounds, q.T, r.bytes, r.tib, r.hours);
    out << buf;
  }
}

// ---- sweeps ----------------------------------------------------------------------

SweepSpec parse_sweep_spec(const json& j) {
  if (!j.is_object()) throw ConfigError("sweep spec must be a JSON object");
  SweepSpec spec;
  try {
    for (const auto& [key, value] : j.items()) {
      if (!value.is_array() || value.empty()) {
        throw ConfigError("sweep key '" + key + "' needs a non-empty array");
      }
      if (key == "growth") {
        for (const auto& v : value) spec.growth.push_back(parse_growth(v.get<std::string>()));
      } else if (key == "alpha") {
        spec.alpha = value.get<std::vector<double>>();
      } else if (key == "beta") {
        spec.beta = value.get<std::vector<int>>();
      } else if (key == "T") {
        spec.T = value.get<std::vector<int>>();
      } else {
        throw ConfigError("unknown sweep key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad sweep spec: ") + e.what());
  }
  return spec;
}

std::vector<ExperimentConfig> expand_sweep(const ExperimentConfig& base, const SweepSpec& spec) {
  const auto& s = base.sched;
  const std::vector<Growth> growth = spec.growth.empty() ? std::vector{s.growth} : spec.growth;
  const std::vector<double> alpha = spec.alpha.empty() ? std::vector{s.alpha} : spec.alpha;
  const std::vector<int> beta = spec.beta.empty() ? std::vector{s.beta} : spec.beta;
  const std::vector<int> T = spec.T.empty() ? std::vector{s.T} : spec.T;
  std::vector<ExperimentConfig> cells;
  for (auto g : growth) {
    for (double a : alpha) {
      for (int b : beta) {
        for (int t : T) {
          ExperimentConfig c = base;
          c.sched.growth = g;
          c.sched.alpha = a;
          c.sched.beta = b;
          c.sched.T = t;
          if (c.mode == ExperimentMode::HFedMSD && t == 1) {
            c.mode = ExperimentMode::HFedMSS;
            c.scc.reset();
            c.scatter_on_full_sync.reset();
          }
          c.metrics_csv.clear();
          c.summary_json.clear();
          cells.push_back(std::move(c));
        }
      }
    }
  }
  return cells;
}

std::vector<SweepCell> run_sweep(const ExperimentConfig& base, const SweepSpec& spec,
                                 std::size_t workers) {
  auto configs = expand_sweep(base, spec);
  std::vector<SweepCell> cells(configs.size());
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (workers > 1) configs[i].workers = 1;
    cells[i].config = configs[i];
  }
  parallel_for(cells.size(), workers, [&](std::size_t i) {
    auto& cell = cells[i];
    try {
      Simulation sim(cell.config);
      const auto res = sim.run();
      cell.config = sim.config();
      cell.final_acc = res.final_eval.accuracy;
      cell.final_loss = res.final_eval.loss;
      cell.ledger_bytes = res.total_bytes();
      cell.closed_form_bytes = closed_form_bytes(cell.config);
      cell.tib = to_tib(static_cast<double>(res.total_bytes()));
      cell.hours = to_hours(res.sim_seconds);
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.error = e.what();
    }
  });
  return cells;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepCell>& cells) {
  out << "cell,mode,growth,alpha,beta,T,status,final_acc,final_loss,ledger_bytes,"
         "closed_form_bytes,tib,hours\n";
  char buf[512];
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& c = cells[i];
    const auto& s = c.config.sched;
    std::string status = c.ok ? "ok" : c.error;
    for (char& ch : status) {
      if (ch == ',' || ch == '\n' || ch == '"') ch = ' ';
    }
    std::snprintf(buf, sizeof buf, "%zu,%s,%s,%g,%d,%d,%s,%.10g,%.10g,%llu,%.10g,%.6g,%.6g\n", i,
                  to_string(c.config.mode).c_str(), to_string(s.growth).c_str(), s.alpha, s.beta,
                  s.T, status.c_str(), c.final_acc, c.final_loss,
                  static_cast<unsigned long long>(c.ledger_bytes), c.closed_form_bytes, c.tib,
                  c.hours);
    out << buf;
  }
}

}  // namespace hfedms
