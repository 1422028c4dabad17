#pragma once

// Sequential-to-parallel scheduling: clients train one after another inside a
// group, groups train side by side, and the number of groups grows over time.
//
// Rounds are numbered from 0. Under periodic synchronisation round r is a
// full-sync round iff r % T == 0, so R rounds contain ceil(R/T) of them.
// The growth function is evaluated at the 1-based cycle boundary
// (r / T + 1) * T.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "hfedms/config.hpp"
#include "hfedms/datastream.hpp"
#include "hfedms/icg.hpp"
#include "hfedms/lasp.hpp"
#include "hfedms/metrics.hpp"
#include "hfedms/nncore.hpp"
#include "hfedms/scc.hpp"

namespace hfedms {

// `r` must be a positive multiple of T. Result clamped to [1, K].
std::size_t group_count(Growth growth, double alpha, int beta, int T, long r, std::size_t K);

inline bool is_full_sync_round(int r, int T) { return r % T == 0; }
inline long growth_round(int r, int T) { return (static_cast<long>(r) / T + 1) * T; }

// ceil(kappa * M), at least 1 and at most M.
std::size_t selected_group_count(double kappa, std::size_t M);

// Trains `start` through the clients of one group in order and returns the
// last client's model. Client i draws minibatch order from
// (seed, Train, round, group, i).
struct ChainOptions {
  TrainOptions train;
  int local_epochs = 1;
  std::uint64_t seed = 0;
  int round = 0;
  int group = 0;
};

DenseModel train_chain(const DenseModel& start,
                       std::span<const std::vector<LabeledExample>> client_batches,
                       std::span<const int> client_ids, const ChainOptions& options);

// Element-wise mean of the models, in the given order.
DenseModel aggregate(std::span<const DenseModel> models);

// Runs fn(0) .. fn(count - 1) on up to `workers` threads. The first
// exception by task index is rethrown after every task finished.
void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn);

struct RoundOutcome {
  int round = 0;
  SyncMode mode = SyncMode::FullSync;
  std::size_t M = 0;
  std::vector<std::vector<int>> selected_groups;
  ParamVector global_params;
  double median_cpd = 0.0;
  std::size_t compensation_skips = 0;
};

struct ExperimentResult {
  std::vector<RoundMetrics> rounds;
  DenseModel final_model;
  EvalResult final_eval;
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  double sim_seconds = 0.0;
  ParamScale scale;
  ForgettingProbe probe;
  std::size_t compensation_skips = 0;
  std::size_t full_sync_rounds = 0;
  std::size_t calibration_rounds = 0;

  std::uint64_t total_bytes() const { return bytes_up + bytes_down; }
};

class Simulation {
 public:
  explicit Simulation(const ExperimentConfig& config);

  // Runs round `round()` and advances. Throws std::logic_error past R.
  RoundOutcome step();
  ExperimentResult run();

  int round() const { return round_; }
  bool done() const { return round_ >= config_.sched.R; }

  const ExperimentConfig& config() const { return config_; }
  const Population& population() const { return population_; }
  const DenseModel& global_model() const { return global_; }
  const TrafficLedger& ledger() const { return ledger_; }
  const std::vector<SccClientState>& scc_states() const { return scc_; }
  const GroupAssignment& groups() const { return groups_; }
  const std::vector<RoundMetrics>& metrics() const { return metrics_; }
  const ForgettingProbe& probe() const { return probe_; }

  // Batch of `client` for `round`, honouring the data mode.
  std::vector<LabeledExample> batch_for(int client, int round) const;

 private:
  int period() const;
  void regroup(int r);
  void select_groups(int r);
  RoundOutcome full_sync_round(int r);
  RoundOutcome calibration_round(int r);
  void finish_round(const RoundOutcome& out);

  ExperimentConfig config_;
  Population population_;
  StreamOptions stream_;
  DenseModel global_;
  TrafficLedger ledger_;
  MmdConfig mmd_;
  std::vector<SccClientState> scc_;
  GroupAssignment groups_;
  std::vector<std::vector<int>> selected_;
  std::size_t M_ = 0;
  double median_cpd_ = 0.0;
  std::vector<RoundMetrics> metrics_;
  ForgettingProbe probe_;
  std::size_t compensation_skips_ = 0;
  std::size_t full_rounds_ = 0;
  std::size_t calibration_rounds_ = 0;
  int round_ = 0;
};

ExperimentResult run_experiment(const ExperimentConfig& config);

// Parameter counts that traffic accounting uses for this config.
ParamScale accounting_scale(const ExperimentConfig& config);

}  // namespace hfedms
