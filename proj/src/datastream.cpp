#include "hfedms/datastream.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "hfedms/error.hpp"
#include "hfedms/rng.hpp"

namespace hfedms {

std::vector<double> sample_dirichlet(std::size_t dim, double concentration, std::uint64_t seed,
                                     std::uint64_t stream) {
  if (dim == 0) throw InvalidInput("Dirichlet dimension must be positive");
  if (!(concentration > 0.0)) throw InvalidInput("Dirichlet concentration must be positive");
  Rng rng = make_rng(seed, StreamTag::Population, 1, stream);
  std::gamma_distribution<double> gamma(concentration, 1.0);
  std::vector<double> w(dim);
  double sum = 0.0;
  for (double& v : w) {
    v = gamma(rng);
    sum += v;
  }
  if (!(sum > 0.0) || !std::isfinite(sum)) {
    std::uniform_int_distribution<std::size_t> pick(0, dim - 1);
    std::fill(w.begin(), w.end(), 0.0);
    w[pick(rng)] = 1.0;
    return w;
  }
  for (double& v : w) v /= sum;
  return w;
}

Population make_population(const PopulationParams& params, std::uint64_t seed) {
  if (params.num_clients < 1) throw InvalidInput("population needs at least one client");
  if (params.num_classes < 2) throw InvalidInput("population needs at least two classes");
  if (params.feature_dim < 1) throw InvalidInput("feature dimension must be positive");
  if (!(params.skew > 0.0)) throw InvalidInput("skew must be positive");

  Population pop;
  pop.num_classes = params.num_classes;
  pop.feature_dim = params.feature_dim;

  auto means = std::make_shared<ClassMeans>(params.num_classes,
                                            std::vector<double>(params.feature_dim));
  {
    Rng rng = make_rng(seed, StreamTag::Population, 0);
    std::normal_distribution<double> normal(0.0, params.class_separation);
    for (auto& mean : *means) {
      for (double& v : mean) v = normal(rng);
    }
  }

  pop.clients.reserve(params.num_clients);
  for (std::size_t k = 0; k < params.num_clients; ++k) {
    ClientProfile profile;
    profile.client_id = static_cast<int>(k);
    profile.class_weights = sample_dirichlet(params.num_classes, params.skew, seed, k);
    profile.class_means = means;
    pop.clients.push_back(std::move(profile));
  }

  Rng rng = make_rng(seed, StreamTag::Population, 2);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (std::size_t c = 0; c < params.num_classes; ++c) {
    for (std::size_t i = 0; i < params.test_per_class; ++i) {
      LabeledExample ex;
      ex.label = static_cast<int>(c);
      ex.features = (*means)[c];
      for (double& v : ex.features) v += noise(rng);
      pop.test_set.push_back(std::move(ex));
    }
  }
  return pop;
}

std::vector<double> effective_weights(const ClientProfile& profile, int round,
                                      const StreamOptions& options) {
  std::vector<double> w = profile.class_weights;
  if (options.vanish_class < 0 || round < options.vanish_round ||
      static_cast<std::size_t>(options.vanish_class) >= w.size()) {
    return w;
  }
  w[static_cast<std::size_t>(options.vanish_class)] = 0.0;
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  if (sum > 0.0) {
    for (double& v : w) v /= sum;
  } else {
    const double u = 1.0 / static_cast<double>(w.size() - 1);
    for (std::size_t c = 0; c < w.size(); ++c) {
      w[c] = static_cast<int>(c) == options.vanish_class ? 0.0 : u;
    }
  }
  return w;
}

namespace {

StreamBatch pool_batch(const ClientProfile& profile, int round, std::size_t n, std::uint64_t seed,
                       const StreamOptions& options) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < profile.pool.size(); ++i) {
    const bool vanished = options.vanish_class >= 0 && round >= options.vanish_round &&
                          profile.pool[i].label == options.vanish_class;
    if (!vanished) eligible.push_back(i);
  }
  StreamBatch batch;
  batch.round = round;
  if (eligible.empty()) {
    throw PoolExhausted("client " + std::to_string(profile.client_id) + " has no eligible pool rows");
  }
  if (options.pool_replacement) {
    Rng rng = make_rng(seed, StreamTag::Batch, static_cast<std::uint64_t>(profile.client_id),
                       static_cast<std::uint64_t>(round));
    std::uniform_int_distribution<std::size_t> pick(0, eligible.size() - 1);
    std::normal_distribution<double> jitter(0.0, options.pool_jitter);
    for (std::size_t i = 0; i < n; ++i) {
      LabeledExample ex = profile.pool[eligible[pick(rng)]];
      if (options.pool_jitter > 0.0) {
        for (double& v : ex.features) v += jitter(rng);
      }
      batch.examples.push_back(std::move(ex));
    }
    return batch;
  }
  Rng rng = make_rng(seed, StreamTag::CsvPool, static_cast<std::uint64_t>(profile.client_id));
  std::shuffle(eligible.begin(), eligible.end(), rng);
  const std::size_t start = static_cast<std::size_t>(round) * n;
  if (start >= eligible.size()) {
    throw PoolExhausted("client " + std::to_string(profile.client_id) + " pool exhausted at round " +
                        std::to_string(round));
  }
  const std::size_t stop = std::min(eligible.size(), start + n);
  for (std::size_t i = start; i < stop; ++i) batch.examples.push_back(profile.pool[eligible[i]]);
  return batch;
}

}  // namespace

StreamBatch next_batch(const ClientProfile& profile, int round, std::size_t n, std::uint64_t seed,
                       const StreamOptions& options) {
  if (n == 0) throw InvalidInput("batch size must be at least 1");
  if (round < 0) throw InvalidInput("round must be non-negative");
  if (!profile.pool.empty()) return pool_batch(profile, round, n, seed, options);
  if (!profile.class_means) throw InvalidInput("synthetic profile has no class means");

  const auto weights = effective_weights(profile, round, options);
  Rng rng = make_rng(seed, StreamTag::Batch, static_cast<std::uint64_t>(profile.client_id),
                     static_cast<std::uint64_t>(round));
  std::discrete_distribution<int> label_dist(weights.begin(), weights.end());
  std::normal_distribution<double> noise(0.0, 1.0);
  StreamBatch batch;
  batch.round = round;
  batch.examples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    LabeledExample ex;
    ex.label = label_dist(rng);
    ex.features = (*profile.class_means)[static_cast<std::size_t>(ex.label)];
    for (double& v : ex.features) v += noise(rng);
    batch.examples.push_back(std::move(ex));
  }
  return batch;
}

std::vector<double> ClassDistribution::normalized() const {
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), 0L));
  std::vector<double> p(counts.size(), 0.0);
  if (total <= 0.0) return p;
  for (std::size_t c = 0; c < counts.size(); ++c) p[c] = static_cast<double>(counts[c]) / total;
  return p;
}

ClassDistribution summarize_distribution(std::span<const LabeledExample> examples,
                                         std::size_t num_classes) {
  ClassDistribution dist;
  dist.counts.assign(num_classes, 0);
  dist.degenerate = examples.empty();
  for (const auto& ex : examples) {
    if (ex.label < 0 || static_cast<std::size_t>(ex.label) >= num_classes) {
      throw InvalidInput("label " + std::to_string(ex.label) + " outside [0, " +
                         std::to_string(num_classes) + ")");
    }
    ++dist.counts[static_cast<std::size_t>(ex.label)];
  }
  return dist;
}

ClassDistribution summarize_distribution(const StreamBatch& batch, std::size_t num_classes) {
  return summarize_distribution(batch.examples, num_classes);
}

// ---- CSV ----------------------------------------------------------------------------

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t i = 0;
  while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
  return s.substr(i);
}

}  // namespace

CsvDataset load_csv_dataset(const std::filesystem::path& path, std::size_t num_classes,
                            std::size_t feature_dim, std::size_t test_every) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open dataset '" + path.string() + "'");
  const std::string source = path.string();

  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw ParseError(source, 1, "missing header");
  ++lineno;
  {
    const auto header = split_csv_line(trim(line));
    if (header.size() != feature_dim + 2 || trim(header[0]) != "client" || trim(header[1]) != "label") {
      throw ParseError(source, lineno,
                       "header must be client,label,f0..f" + std::to_string(feature_dim - 1));
    }
  }

  CsvDataset data;
  std::map<std::string, std::size_t> index;
  std::vector<std::size_t> seen;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != feature_dim + 2) {
      throw ParseError(source, lineno,
                       "expected " + std::to_string(feature_dim + 2) + " fields, found " +
                           std::to_string(fields.size()));
    }
    const std::string client = trim(fields[0]);
    if (client.empty()) throw ParseError(source, lineno, "empty client id");

    LabeledExample ex;
    {
      const std::string lab = trim(fields[1]);
      char* end = nullptr;
      errno = 0;
      const long v = std::strtol(lab.c_str(), &end, 10);
      if (lab.empty() || *end != '\0' || errno != 0) {
        throw ParseError(source, lineno, "label '" + lab + "' is not an integer");
      }
      if (v < 0 || static_cast<std::size_t>(v) >= num_classes) {
        throw ParseError(source, lineno, "unknown label " + lab);
      }
      ex.label = static_cast<int>(v);
    }
    ex.features.reserve(feature_dim);
    for (std::size_t j = 0; j < feature_dim; ++j) {
      const std::string f = trim(fields[j + 2]);
      char* end = nullptr;
      const double v = std::strtod(f.c_str(), &end);
      if (f.empty() || *end != '\0' || !std::isfinite(v)) {
        throw ParseError(source, lineno, "feature f" + std::to_string(j) + " '" + f + "' is not a finite number");
      }
      ex.features.push_back(v);
    }

    auto [it, inserted] = index.try_emplace(client, data.client_names.size());
    if (inserted) {
      data.client_names.push_back(client);
      data.client_pools.emplace_back();
      seen.push_back(0);
    }
    const std::size_t k = it->second;
    const std::size_t ordinal = seen[k]++;
    if (test_every > 0 && ordinal % test_every == test_every - 1) {
      data.test_set.push_back(std::move(ex));
    } else {
      data.client_pools[k].push_back(std::move(ex));
    }
  }
  return data;
}

void write_csv_dataset(const std::filesystem::path& path, std::span<const std::string> clients,
                       std::span<const LabeledExample> rows) {
  if (clients.size() != rows.size()) throw InvalidInput("client and row counts differ");
  if (rows.empty()) throw InvalidInput("nothing to write");
  std::ofstream out(path);
  if (!out) throw InvalidInput("cannot write '" + path.string() + "'");
  const std::size_t dim = rows.front().features.size();
  out << "client,label";
  for (std::size_t j = 0; j < dim; ++j) out << ",f" << j;
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].features.size() != dim) throw InvalidInput("rows differ in feature count");
    out << clients[i] << ',' << rows[i].label;
    for (double v : rows[i].features) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << ',' << buf;
    }
    out << '\n';
  }
}

Population population_from_csv(const CsvDataset& data, std::size_t num_classes,
                               std::size_t feature_dim) {
  Population pop;
  pop.num_classes = num_classes;
  pop.feature_dim = feature_dim;
  pop.test_set = data.test_set;
  for (std::size_t k = 0; k < data.client_pools.size(); ++k) {
    const auto& pool = data.client_pools[k];
    if (pool.empty()) continue;
    ClientProfile profile;
    profile.client_id = static_cast<int>(pop.clients.size());
    profile.pool = pool;
    profile.class_weights = summarize_distribution(pool, num_classes).normalized();
    pop.clients.push_back(std::move(profile));
  }
  if (pop.clients.empty()) throw InvalidInput("dataset has no training rows");
  return pop;
}

}  // namespace hfedms
