#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "hfedms/example.hpp"
#include "hfedms/nncore.hpp"

namespace hfedms {

struct EvalResult {
  double accuracy = 0.0;
  double loss = 0.0;  // mean natural-log cross-entropy
};

// Throws InvalidInput on an empty test set.
EvalResult evaluate(const DenseModel& model, std::span<const LabeledExample> test_set);

// Accuracy per class; -1 for classes absent from `test_set`.
std::vector<double> class_accuracy(const DenseModel& model, std::span<const LabeledExample> test_set,
                                   std::size_t num_classes);

struct RoundMetrics {
  int round = 0;
  std::string mode;  // "full" or "part"
  std::size_t M = 0;
  double acc = 0.0;
  double loss = 0.0;
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  std::uint64_t cum_bytes = 0;
  double sim_time_s = 0.0;
  double median_cpd = 0.0;
  std::uint64_t updated_params = 0;
};

struct ForgettingProbe {
  int probe_round = 0;
  std::vector<LabeledExample> batch;
  std::vector<double> series;  // accuracy after probe_round, probe_round + 1, ...
};

std::vector<double> forgetting_curve(std::span<const LabeledExample> probe,
                                     std::span<const DenseModel> snapshots);

inline constexpr const char* kMetricsHeader =
    "round,mode,M,acc,loss,bytes_up,bytes_down,cum_bytes,sim_time_s,median_cpd,updated_params";

void write_metrics_csv(std::ostream& out, std::span<const RoundMetrics> rows);
void write_metrics_csv(const std::filesystem::path& path, std::span<const RoundMetrics> rows);

}  // namespace hfedms
