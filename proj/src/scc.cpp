#include "hfedms/scc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "hfedms/error.hpp"

namespace hfedms {

std::vector<SemanticRecord> extract_semantics(const FeatureExtractor& extractor,
                                              std::span<const LabeledExample> batch, int round) {
  std::vector<SemanticRecord> out;
  out.reserve(batch.size());
  for (const auto& ex : batch) {
    if (ex.features.size() != extractor.input_dim()) {
      throw InvalidInput("example has " + std::to_string(ex.features.size()) +
                         " features, extractor expects " + std::to_string(extractor.input_dim()));
    }
    out.push_back({extractor.forward(ex.features), ex.label, round});
  }
  return out;
}

const std::vector<double>& DriftEstimate::for_class(int label) const {
  const auto c = static_cast<std::size_t>(label);
  if (c < per_class.size() && per_class[c]) return *per_class[c];
  return global;
}

DriftEstimate compute_drifts(const FeatureExtractor& current, const FeatureExtractor& previous,
                             std::span<const LabeledExample> batch, std::size_t num_classes) {
  if (current.output_dim() != previous.output_dim()) {
    throw InvalidInput("extractors disagree on semantic dimension");
  }
  const std::size_t dim = current.output_dim();
  std::vector<std::vector<double>> sum_new(num_classes, std::vector<double>(dim, 0.0));
  std::vector<std::vector<double>> sum_old(num_classes, std::vector<double>(dim, 0.0));
  std::vector<std::size_t> count(num_classes, 0);
  for (const auto& ex : batch) {
    if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= num_classes) {
      throw InvalidInput("label " + std::to_string(ex.label) + " out of range");
    }
    const auto c = static_cast<std::size_t>(ex.label);
    const auto zn = current.forward(ex.features);
    const auto zo = previous.forward(ex.features);
    for (std::size_t j = 0; j < dim; ++j) {
      sum_new[c][j] += zn[j];
      sum_old[c][j] += zo[j];
    }
    ++count[c];
  }

  DriftEstimate drift;
  drift.per_class.resize(num_classes);
  drift.global.assign(dim, 0.0);
  std::vector<double> all_new(dim, 0.0), all_old(dim, 0.0);
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (count[c] == 0) continue;
    std::vector<double> d(dim);
    const double n = static_cast<double>(count[c]);
    for (std::size_t j = 0; j < dim; ++j) {
      d[j] = sum_new[c][j] / n - sum_old[c][j] / n;
      all_new[j] += sum_new[c][j];
      all_old[j] += sum_old[c][j];
    }
    drift.per_class[c] = std::move(d);
  }
  if (!batch.empty()) {
    const double n = static_cast<double>(batch.size());
    for (std::size_t j = 0; j < dim; ++j) drift.global[j] = all_new[j] / n - all_old[j] / n;
  }
  return drift;
}

std::vector<SemanticRecord> apply_drift(std::span<const SemanticRecord> records,
                                        const DriftEstimate& drift) {
  std::vector<SemanticRecord> out(records.begin(), records.end());
  for (auto& rec : out) {
    const auto& d = drift.for_class(rec.label);
    if (d.size() != rec.z.size()) throw InvalidInput("drift and record dimensions differ");
    for (std::size_t j = 0; j < d.size(); ++j) rec.z[j] += d[j];
  }
  return out;
}

CompensationResult compensate(SemanticDB& db, std::span<const LabeledExample> batch,
                              const FeatureExtractor& current, std::size_t num_classes) {
  if (db.compensated_cache) return {*db.compensated_cache, false};
  CompensationResult result;
  if (!db.backup_extractor) {
    result.skipped = !db.records.empty();
    result.records = db.records;
  } else {
    const auto drift = compute_drifts(current, *db.backup_extractor, batch, num_classes);
    result.records = apply_drift(db.records, drift);
    db.records = result.records;
  }
  db.compensated_cache = result.records;
  db.backup_extractor.reset();
  db.backup_round = -1;
  return result;
}

CalibrationDataset build_calibration_dataset(std::span<const SemanticRecord> current,
                                             std::span<const SemanticRecord> history) {
  CalibrationDataset out;
  out.semantics.reserve(current.size() + history.size());
  out.labels.reserve(current.size() + history.size());
  for (const auto* part : {&current, &history}) {
    for (const auto& rec : *part) {
      out.semantics.push_back(rec.z);
      out.labels.push_back(rec.label);
    }
  }
  return out;
}

std::vector<std::optional<std::vector<double>>> class_means_of(
    std::span<const SemanticRecord> records, std::size_t num_classes) {
  std::vector<std::optional<std::vector<double>>> means(num_classes);
  std::vector<std::size_t> count(num_classes, 0);
  for (const auto& rec : records) {
    if (rec.label < 0 || static_cast<std::size_t>(rec.label) >= num_classes) {
      throw InvalidInput("label " + std::to_string(rec.label) + " out of range");
    }
    auto& m = means[static_cast<std::size_t>(rec.label)];
    if (!m) m.emplace(rec.z.size(), 0.0);
    for (std::size_t j = 0; j < rec.z.size(); ++j) (*m)[j] += rec.z[j];
    ++count[static_cast<std::size_t>(rec.label)];
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (!means[c]) continue;
    for (double& v : *means[c]) v /= static_cast<double>(count[c]);
  }
  return means;
}

std::vector<SemanticRecord> select_representatives(
    std::span<const SemanticRecord> candidates,
    std::span<const std::optional<std::vector<double>>> class_means, std::size_t q,
    std::size_t num_classes) {
  if (candidates.size() <= q) return {candidates.begin(), candidates.end()};
  const auto fallback = class_means_of(candidates, num_classes);

  std::vector<double> delta(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto c = static_cast<std::size_t>(candidates[i].label);
    const auto& mean = (c < class_means.size() && class_means[c]) ? *class_means[c] : *fallback[c];
    if (mean.size() != candidates[i].z.size()) throw InvalidInput("class mean dimension mismatch");
    double s = 0.0;
    for (std::size_t j = 0; j < mean.size(); ++j) {
      const double d = candidates[i].z[j] - mean[j];
      s += d * d;
    }
    delta[i] = std::sqrt(s);
  }

  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (delta[a] != delta[b]) return delta[a] < delta[b];
    if (candidates[a].round_stored != candidates[b].round_stored) {
      return candidates[a].round_stored < candidates[b].round_stored;
    }
    return a < b;
  });
  order.resize(q);
  std::sort(order.begin(), order.end());
  std::vector<SemanticRecord> kept;
  kept.reserve(q);
  for (std::size_t i : order) kept.push_back(candidates[i]);
  return kept;
}

void SccClientState::on_full_sync(std::span<const LabeledExample> batch, int cycle_start) {
  stashed_.assign(batch.begin(), batch.end());
  candidates_.clear();
  cycle_start_ = cycle_start;
  db_.compensated_cache.reset();
}

CalibrationStep SccClientState::on_calibration(const FeatureExtractor& extractor,
                                               std::span<const LabeledExample> batch, int round,
                                               bool first, bool last, const SccOptions& options) {
  CalibrationStep step;
  const auto current = extract_semantics(extractor, batch, round);
  if (!options.enabled) {
    step.dataset = build_calibration_dataset(current, {});
    return step;
  }

  if (first) {
    candidates_ = extract_semantics(extractor, stashed_, cycle_start_);
    stashed_.clear();
    if (options.compensate) {
      step.compensation_skipped = compensate(db_, batch, extractor, options.num_classes).skipped;
    } else {
      db_.compensated_cache = db_.records;
      db_.backup_extractor.reset();
      db_.backup_round = -1;
    }
  }
  static const std::vector<SemanticRecord> kEmpty;
  const auto& history = db_.compensated_cache ? *db_.compensated_cache : kEmpty;
  step.dataset = build_calibration_dataset(current, history);
  candidates_.insert(candidates_.end(), current.begin(), current.end());

  if (last) {
    std::vector<SemanticRecord> pool = history;
    pool.insert(pool.end(), candidates_.begin(), candidates_.end());
    const auto means = class_means_of(current, options.num_classes);
    db_.records = select_representatives(pool, means, db_.capacity, options.num_classes);
    db_.backup_extractor = extractor;
    db_.backup_round = cycle_start_;
    db_.compensated_cache.reset();
    candidates_.clear();
  }
  return step;
}

}  // namespace hfedms
