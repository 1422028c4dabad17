#pragma once

// Per-client semantic database: stored extractor outputs that are shifted by
// an estimated drift when the extractor changes, replayed during classifier
// calibration, and pruned to the Q most representative entries.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "hfedms/example.hpp"
#include "hfedms/nncore.hpp"

namespace hfedms {

struct SemanticRecord {
  std::vector<double> z;
  int label = 0;
  int round_stored = 0;

  bool operator==(const SemanticRecord&) const = default;
};

struct CalibrationDataset {
  std::vector<std::vector<double>> semantics;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

std::vector<SemanticRecord> extract_semantics(const FeatureExtractor& extractor,
                                              std::span<const LabeledExample> batch, int round);

struct DriftEstimate {
  std::vector<std::optional<std::vector<double>>> per_class;  // empty when the class is absent
  std::vector<double> global;                                 // mean drift over the whole batch

  const std::vector<double>& for_class(int label) const;
};

// Per-class mean of h(x, current) - h(x, previous) over `batch`.
DriftEstimate compute_drifts(const FeatureExtractor& current, const FeatureExtractor& previous,
                             std::span<const LabeledExample> batch, std::size_t num_classes);

std::vector<SemanticRecord> apply_drift(std::span<const SemanticRecord> records,
                                        const DriftEstimate& drift);

struct SemanticDB {
  std::size_t capacity = 200;
  std::vector<SemanticRecord> records;
  std::optional<FeatureExtractor> backup_extractor;
  int backup_round = -1;
  std::optional<std::vector<SemanticRecord>> compensated_cache;
};

struct CompensationResult {
  std::vector<SemanticRecord> records;
  bool skipped = false;  // no backup extractor; records returned unchanged
};

// Shifts the stored records into the space of `current` using drifts measured
// on `batch`, caches the result and replaces the stored records with it, then
// releases the backup. A second call in the same cycle returns the cache.
CompensationResult compensate(SemanticDB& db, std::span<const LabeledExample> batch,
                              const FeatureExtractor& current, std::size_t num_classes);

CalibrationDataset build_calibration_dataset(std::span<const SemanticRecord> current,
                                             std::span<const SemanticRecord> history);

// Q candidates with the smallest distance to their class mean. `class_means`
// entries that are empty fall back to the mean over same-class candidates.
// Ties go to the older round, then to the earlier candidate.
std::vector<SemanticRecord> select_representatives(
    std::span<const SemanticRecord> candidates,
    std::span<const std::optional<std::vector<double>>> class_means, std::size_t q,
    std::size_t num_classes);

std::vector<std::optional<std::vector<double>>> class_means_of(
    std::span<const SemanticRecord> records, std::size_t num_classes);

// ---- per-client cycle bookkeeping -------------------------------------------------

struct SccOptions {
  bool enabled = true;      // false: calibrate on current semantics only
  bool compensate = true;   // false: replay stored semantics without drift correction
  std::size_t num_classes = 0;
};

struct CalibrationStep {
  CalibrationDataset dataset;
  bool compensation_skipped = false;
};

class SccClientState {
 public:
  explicit SccClientState(std::size_t capacity = 200) { db_.capacity = capacity; }

  // Full-sync round: keep the raw batch so its semantics can be taken under
  // the extractor that this round produces.
  void on_full_sync(std::span<const LabeledExample> batch, int cycle_start);

  // Calibration round with frozen `extractor`. Returns the dataset to train
  // the classifier on. On the cycle's last calibration round the candidate
  // pool is pruned into the database and the extractor becomes the backup.
  CalibrationStep on_calibration(const FeatureExtractor& extractor,
                                 std::span<const LabeledExample> batch, int round, bool first,
                                 bool last, const SccOptions& options);

  const SemanticDB& db() const { return db_; }
  SemanticDB& db() { return db_; }

 private:
  SemanticDB db_;
  std::vector<LabeledExample> stashed_;
  std::vector<SemanticRecord> candidates_;
  int cycle_start_ = -1;
};

}  // namespace hfedms
