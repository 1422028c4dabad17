#pragma once

// Synthetic non-i.i.d. client population and per-round streaming batches.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hfedms/example.hpp"

namespace hfedms {

using ClassMeans = std::vector<std::vector<double>>;

struct ClientProfile {
  int client_id = 0;
  std::vector<double> class_weights;              // sums to 1
  std::shared_ptr<const ClassMeans> class_means;  // synthetic mode, shared by all clients
  std::vector<LabeledExample> pool;               // CSV mode; empty in synthetic mode
};

struct Population {
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;
  std::vector<ClientProfile> clients;
  std::vector<LabeledExample> test_set;
};

struct PopulationParams {
  std::size_t num_clients = 40;
  std::size_t num_classes = 10;
  std::size_t feature_dim = 20;
  double skew = 0.3;               // symmetric Dirichlet concentration
  double class_separation = 1.0;   // std-dev of class-mean coordinates
  std::size_t test_per_class = 50;
};

// Class weights ~ Dirichlet(skew) per client, class means ~ N(0, sep^2) once
// per class, unit-variance features around the mean, class-balanced test set.
Population make_population(const PopulationParams& params, std::uint64_t seed);

// Symmetric Dirichlet draw; falls back to a one-hot vector when every gamma
// variate underflows.
std::vector<double> sample_dirichlet(std::size_t dim, double concentration, std::uint64_t seed,
                                     std::uint64_t stream);

struct StreamBatch {
  int round = 0;
  std::vector<LabeledExample> examples;
};

struct StreamOptions {
  bool pool_replacement = true;  // CSV mode: resample with replacement
  double pool_jitter = 0.01;     // CSV mode: Gaussian jitter on resampled features
  int vanish_class = -1;         // class removed from every stream ...
  int vanish_round = 0;          // ... from this round on
};

// Draws n examples for `round`. Pure in (seed, client_id, round). Throws
// PoolExhausted when a no-replacement CSV pool has nothing left.
StreamBatch next_batch(const ClientProfile& profile, int round, std::size_t n, std::uint64_t seed,
                       const StreamOptions& options = {});

// Class weights in effect at `round` after applying the vanishing-class schedule.
std::vector<double> effective_weights(const ClientProfile& profile, int round,
                                      const StreamOptions& options);

struct ClassDistribution {
  std::vector<long> counts;
  bool degenerate = false;  // empty batch

  std::vector<double> as_reals() const { return {counts.begin(), counts.end()}; }
  std::vector<double> normalized() const;
};

ClassDistribution summarize_distribution(const StreamBatch& batch, std::size_t num_classes);
ClassDistribution summarize_distribution(std::span<const LabeledExample> examples,
                                         std::size_t num_classes);

// ---- CSV ingestion -------------------------------------------------------------
//
// Schema: header `client,label,f0,...,f{D-1}`, one example per row.

struct CsvDataset {
  std::vector<std::string> client_names;                // first-appearance order
  std::vector<std::vector<LabeledExample>> client_pools;  // parallel to client_names
  std::vector<LabeledExample> test_set;
};

// Rows whose per-client ordinal satisfies (i % test_every == test_every - 1)
// go to the test split; test_every == 0 disables the split.
CsvDataset load_csv_dataset(const std::filesystem::path& path, std::size_t num_classes,
                            std::size_t feature_dim, std::size_t test_every = 10);

void write_csv_dataset(const std::filesystem::path& path, std::span<const std::string> clients,
                       std::span<const LabeledExample> rows);

// Profiles whose class weights are the label frequencies of each pool.
Population population_from_csv(const CsvDataset& data, std::size_t num_classes,
                               std::size_t feature_dim);

}  // namespace hfedms
