#pragma once

// Experiment configuration: a flat JSON object. Unknown keys are errors.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hfedms/nncore.hpp"

namespace hfedms {

enum class Growth { Linear, Log, Exp };
Growth parse_growth(const std::string& name);
std::string to_string(Growth g);

enum class ExperimentMode { HFedMSD, HFedMSS, FedAvg, StaticGroups };
ExperimentMode parse_mode(const std::string& name);
std::string to_string(ExperimentMode mode);

enum class DataMode { Stream, Static };

struct SchedulerConfig {
  int T = 5;
  int R = 500;
  double kappa = 0.3;
  Growth growth = Growth::Log;
  double alpha = 2.0;
  int beta = 10;
  double lr = 0.01;
  std::size_t minibatch = 5;
  int local_epochs = 1;

  void validate() const;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  ExperimentMode mode = ExperimentMode::HFedMSD;
  SchedulerConfig sched;

  // data
  std::size_t K = 368;
  std::size_t F = 10;
  std::size_t feature_dim = 20;
  double skew = 0.3;
  double class_sep = 1.0;
  std::size_t test_per_class = 50;
  std::size_t n = 50;
  DataMode data_mode = DataMode::Stream;
  int vanish_class = -1;
  int vanish_round = 0;
  std::string csv_path;
  bool csv_replacement = true;
  double csv_jitter = 0.01;
  std::size_t csv_test_every = 10;

  // model
  std::vector<std::size_t> extractor_dims{20, 400, 8};
  Activation activation = Activation::Identity;

  // semantic database
  std::size_t Q = 200;
  std::optional<bool> scc;  // unset: on for HFedMS-D only
  bool scc_compensate = true;

  // traffic
  std::uint64_t accounting_params_total = 0;  // 0: count the model
  std::uint64_t accounting_params_classifier = 0;
  std::uint64_t bytes_per_param = 4;
  double rate_up_bps = 4e6;
  double rate_down_bps = 7e6;
  std::optional<bool> scatter_on_full_sync;  // unset: on for HFedMS-D only
  double compute_seconds_per_round = 0.0;

  // execution and reporting
  std::size_t workers = 1;
  int probe_round = -1;
  int probe_class = -1;
  int icg_max_iters = 10;
  double icg_tol = 1e-6;
  double mmd_bandwidth = 0.0;  // 0: median heuristic
  std::string metrics_csv;
  std::string summary_json;

  bool scc_enabled() const { return scc.value_or(mode == ExperimentMode::HFedMSD); }
  bool scatter_enabled() const {
    return scatter_on_full_sync.value_or(mode == ExperimentMode::HFedMSD);
  }

  // Throws ConfigError naming the offending field.
  void validate() const;
};

ExperimentConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ExperimentConfig& cfg);

// Reads and parses a config file; throws ConfigError with the path on failure.
nlohmann::json read_config_json(const std::filesystem::path& path);
ExperimentConfig load_config(const std::filesystem::path& path);

}  // namespace hfedms
