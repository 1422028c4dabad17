#include "hfedms/metrics.hpp"

#include <cstdio>
#include <fstream>

#include "hfedms/error.hpp"

namespace hfedms {

EvalResult evaluate(const DenseModel& model, std::span<const LabeledExample> test_set) {
  if (test_set.empty()) throw InvalidInput("empty test set");
  std::size_t hits = 0;
  double loss = 0.0;
  for (const auto& ex : test_set) {
    const auto logits = forward_logits(model, forward_features(model, ex.features));
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.size(); ++c) {
      if (logits[c] > logits[best]) best = c;
    }
    if (static_cast<int>(best) == ex.label) ++hits;
    loss += cross_entropy(logits, ex.label);
  }
  const double n = static_cast<double>(test_set.size());
  return {static_cast<double>(hits) / n, loss / n};
}

std::vector<double> class_accuracy(const DenseModel& model, std::span<const LabeledExample> test_set,
                                   std::size_t num_classes) {
  std::vector<double> hits(num_classes, 0.0), total(num_classes, 0.0);
  for (const auto& ex : test_set) {
    const auto c = static_cast<std::size_t>(ex.label);
    if (ex.label < 0 || c >= num_classes) throw InvalidInput("label out of range");
    total[c] += 1.0;
    if (predict(model, ex.features) == ex.label) hits[c] += 1.0;
  }
  std::vector<double> out(num_classes, -1.0);
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (total[c] > 0.0) out[c] = hits[c] / total[c];
  }
  return out;
}

std::vector<double> forgetting_curve(std::span<const LabeledExample> probe,
                                     std::span<const DenseModel> snapshots) {
  std::vector<double> series;
  series.reserve(snapshots.size());
  for (const auto& m : snapshots) series.push_back(evaluate(m, probe).accuracy);
  return series;
}

void write_metrics_csv(std::ostream& out, std::span<const RoundMetrics> rows) {
  out << kMetricsHeader << '\n';
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%s,%zu,%.10g,%.10g,%llu,%llu,%llu,%.10g,%.10g,%llu\n",
                  r.round, r.mode.c_str(), r.M, r.acc, r.loss,
                  static_cast<unsigned long long>(r.bytes_up),
                  static_cast<unsigned long long>(r.bytes_down),
                  static_cast<unsigned long long>(r.cum_bytes), r.sim_time_s, r.median_cpd,
                  static_cast<unsigned long long>(r.updated_params));
    out << buf;
  }
}

void write_metrics_csv(const std::filesystem::path& path, std::span<const RoundMetrics> rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_metrics_csv(out, rows);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace hfedms
