#include "hfedms/stp.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "hfedms/error.hpp"
#include "hfedms/rng.hpp"

namespace hfedms {

std::size_t group_count(Growth growth, double alpha, int beta, int T, long r, std::size_t K) {
  if (T < 1) throw InvalidInput("T must be at least 1");
  if (r < T || r % T != 0) {
    throw InvalidInput("round " + std::to_string(r) + " is not a full-sync round for T=" +
                       std::to_string(T));
  }
  if (!(alpha > 0.0) || beta < 1 || K < 1) throw InvalidInput("invalid growth parameters");
  const double x = static_cast<double>(r / T);
  double f = 0.0;
  switch (growth) {
    case Growth::Linear: f = std::floor(alpha * (x - 1.0) + 1.0); break;
    case Growth::Log: f = std::floor(alpha * std::log(x) + 1.0); break;
    case Growth::Exp: f = std::floor(std::pow(1.0 + alpha, x - 1.0)); break;
  }
  const double m = static_cast<double>(beta) * f;
  if (!(m >= 1.0)) return 1;
  if (m >= static_cast<double>(K)) return K;
  return static_cast<std::size_t>(m);
}

std::size_t selected_group_count(double kappa, std::size_t M) {
  if (M == 0) throw InvalidInput("no groups to select from");
  const auto s = static_cast<std::size_t>(std::ceil(kappa * static_cast<double>(M) - 1e-9));
  return std::clamp<std::size_t>(s, 1, M);
}

DenseModel train_chain(const DenseModel& start,
                       std::span<const std::vector<LabeledExample>> client_batches,
                       std::span<const int> client_ids, const ChainOptions& options) {
  if (client_batches.empty()) throw InvalidInput("group has no clients");
  if (client_batches.size() != client_ids.size()) throw InvalidInput("batches and clients differ");
  DenseModel model = start;
  for (std::size_t i = 0; i < client_batches.size(); ++i) {
    Rng rng = make_rng(options.seed, StreamTag::Train, static_cast<std::uint64_t>(options.round),
                       static_cast<std::uint64_t>(options.group), i);
    try {
      for (int e = 0; e < options.local_epochs; ++e) {
        train_one_epoch(model, client_batches[i], options.train, rng);
      }
    } catch (const TrainingDiverged&) {
      throw TrainingDiverged("").with_context(options.round, options.group, client_ids[i]);
    }
  }
  return model;
}

DenseModel aggregate(std::span<const DenseModel> models) {
  if (models.empty()) throw InvalidInput("nothing to aggregate");
  std::vector<ParamVector> flat;
  flat.reserve(models.size());
  for (const auto& m : models) flat.push_back(flatten(m));
  DenseModel out = models.front();
  unflatten(average_params(flat), out);
  return out;
}

void parallel_for(std::size_t count, std::size_t workers,
                  const std::function<void(std::size_t)>& fn) {
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  const std::size_t n = std::min(workers, count);
  threads.reserve(n);
  for (std::size_t t = 0; t < n; ++t) threads.emplace_back(worker);
  for (auto& t : threads) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

ParamScale accounting_scale(const ExperimentConfig& config) {
  if (config.accounting_params_total > 0) {
    return {config.accounting_params_total, config.accounting_params_classifier};
  }
  std::uint64_t total = 0;
  const auto& d = config.extractor_dims;
  for (std::size_t i = 0; i + 1 < d.size(); ++i) total += d[i] * d[i + 1] + d[i + 1];
  const std::uint64_t cls = d.back() * config.F + config.F;
  return {total + cls, cls};
}

namespace {

Population build_population(const ExperimentConfig& cfg) {
  if (!cfg.csv_path.empty()) {
    const auto data = load_csv_dataset(cfg.csv_path, cfg.F, cfg.feature_dim, cfg.csv_test_every);
    return population_from_csv(data, cfg.F, cfg.feature_dim);
  }
  PopulationParams p;
  p.num_clients = cfg.K;
  p.num_classes = cfg.F;
  p.feature_dim = cfg.feature_dim;
  p.skew = cfg.skew;
  p.class_separation = cfg.class_sep;
  p.test_per_class = cfg.test_per_class;
  return make_population(p, cfg.seed);
}

ExperimentConfig resolved(ExperimentConfig cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

Simulation::Simulation(const ExperimentConfig& config)
    : config_(resolved(config)),
      population_(build_population(config_)),
      stream_{config_.csv_replacement, config_.csv_jitter, config_.vanish_class,
              config_.vanish_round},
      global_(init_model(config_.extractor_dims, config_.F, config_.activation, config_.seed)),
      ledger_(accounting_scale(config_),
              LinkModel{config_.rate_up_bps, config_.rate_down_bps, config_.bytes_per_param}),
      mmd_(config_.mmd_bandwidth > 0.0 ? MmdConfig::fixed(config_.mmd_bandwidth)
                                       : MmdConfig::median()) {
  config_.K = population_.clients.size();
  if (config_.K == 0) throw ConfigError("data set has no clients");
  if (config_.sched.kappa * static_cast<double>(config_.K) < 1.0) {
    throw ConfigError("kappa * K must be at least 1");
  }
  if (population_.test_set.empty()) throw ConfigError("data set has no test examples");
  if (config_.mode == ExperimentMode::HFedMSD) {
    scc_.assign(config_.K, SccClientState(config_.Q));
  }
  probe_.probe_round = config_.probe_round;
}

int Simulation::period() const {
  return config_.mode == ExperimentMode::HFedMSD ? config_.sched.T : 1;
}

std::vector<LabeledExample> Simulation::batch_for(int client, int round) const {
  const int r = config_.data_mode == DataMode::Static ? 0 : round;
  return next_batch(population_.clients[static_cast<std::size_t>(client)], r, config_.n,
                    config_.seed, stream_)
      .examples;
}

void Simulation::regroup(int r) {
  const std::size_t K = config_.K;
  std::vector<Point> dists(K);
  for (std::size_t k = 0; k < K; ++k) {
    dists[k] = summarize_distribution(batch_for(static_cast<int>(k), r), config_.F).normalized();
  }

  if (config_.mode == ExperimentMode::FedAvg) {
    Rng rng = make_rng(config_.seed, StreamTag::Selection, static_cast<std::uint64_t>(r));
    std::vector<int> order(K);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(selected_group_count(config_.sched.kappa, K));
    std::sort(order.begin(), order.end());
    groups_ = GroupAssignment{};
    groups_.round_created = r;
    groups_.group_size = 1;
    for (int c : order) groups_.groups.push_back({c});
    M_ = K;
    selected_ = groups_.groups;
    median_cpd_ = grouping_quality(groups_.groups, dists, mmd_).median;
    return;
  }

  const auto& s = config_.sched;
  M_ = group_count(s.growth, s.alpha, s.beta, period(), growth_round(r, period()), K);
  std::vector<int> clients(K);
  std::iota(clients.begin(), clients.end(), 0);
  groups_ = inter_cluster_grouping(clients, dists, M_, config_.seed, r,
                                   IcgOptions{config_.icg_max_iters, config_.icg_tol});
  median_cpd_ = grouping_quality(groups_.groups, dists, mmd_).median;
}

void Simulation::select_groups(int r) {
  if (config_.mode == ExperimentMode::FedAvg) return;
  const std::size_t M = groups_.groups.size();
  Rng rng = make_rng(config_.seed, StreamTag::Selection, static_cast<std::uint64_t>(r));
  std::vector<std::size_t> idx(M);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(selected_group_count(config_.sched.kappa, M));
  std::sort(idx.begin(), idx.end());
  selected_.clear();
  for (auto i : idx) selected_.push_back(groups_.groups[i]);
}

RoundOutcome Simulation::full_sync_round(int r) {
  if (config_.mode != ExperimentMode::StaticGroups || groups_.groups.empty()) regroup(r);
  select_groups(r);

  const std::size_t G = selected_.size();
  std::vector<std::vector<std::vector<LabeledExample>>> batches(G);
  for (std::size_t g = 0; g < G; ++g) {
    for (int c : selected_[g]) batches[g].push_back(batch_for(c, r));
  }

  std::vector<DenseModel> results(G);
  const auto& s = config_.sched;
  parallel_for(G, config_.workers, [&](std::size_t g) {
    ChainOptions opts;
    opts.train = TrainOptions{s.lr, s.minibatch, false};
    opts.local_epochs = s.local_epochs;
    opts.seed = config_.seed;
    opts.round = r;
    opts.group = static_cast<int>(g);
    results[g] = train_chain(global_, batches[g], selected_[g], opts);
  });
  global_ = aggregate(results);

  for (std::size_t g = 0; g < G; ++g) {
    ledger_.record_chain(selected_[g].size(), r, SyncMode::FullSync);
    if (config_.scatter_enabled()) ledger_.record_scatter(selected_[g].size(), r, SyncMode::FullSync);
  }
  if (!scc_.empty()) {
    for (std::size_t g = 0; g < G; ++g) {
      for (std::size_t i = 0; i < selected_[g].size(); ++i) {
        scc_[static_cast<std::size_t>(selected_[g][i])].on_full_sync(batches[g][i], r);
      }
    }
  }
  ++full_rounds_;

  RoundOutcome out;
  out.round = r;
  out.mode = SyncMode::FullSync;
  return out;
}

RoundOutcome Simulation::calibration_round(int r) {
  const int T = config_.sched.T;
  const bool first = r % T == 1;
  const bool last = (r + 1) % T == 0;
  const std::size_t G = selected_.size();
  const auto& s = config_.sched;
  const SccOptions scc_opts{config_.scc_enabled(), config_.scc_compensate, config_.F};

  std::vector<LinearLayer> classifiers(G);
  std::vector<std::size_t> skips(G, 0);
  parallel_for(G, config_.workers, [&](std::size_t g) {
    DenseModel model = global_;
    const TrainOptions opts{s.lr, s.minibatch, true};
    for (std::size_t i = 0; i < selected_[g].size(); ++i) {
      const int c = selected_[g][i];
      const auto batch = batch_for(c, r);
      auto step = scc_[static_cast<std::size_t>(c)].on_calibration(global_.extractor, batch, r,
                                                                   first, last, scc_opts);
      if (step.compensation_skipped) ++skips[g];
      Rng rng = make_rng(config_.seed, StreamTag::Train, static_cast<std::uint64_t>(r), g, i);
      try {
        for (int e = 0; e < s.local_epochs; ++e) {
          train_classifier_epoch(model, step.dataset.semantics, step.dataset.labels, opts, rng);
        }
      } catch (const TrainingDiverged&) {
        throw TrainingDiverged("").with_context(r, static_cast<int>(g), c);
      }
    }
    classifiers[g] = std::move(model.classifier);
  });

  LinearLayer mean = classifiers.front();
  for (std::size_t j = 0; j < mean.weights.size(); ++j) {
    double acc = 0.0;
    for (const auto& cl : classifiers) acc += cl.weights[j];
    mean.weights[j] = acc / static_cast<double>(G);
  }
  for (std::size_t j = 0; j < mean.bias.size(); ++j) {
    double acc = 0.0;
    for (const auto& cl : classifiers) acc += cl.bias[j];
    mean.bias[j] = acc / static_cast<double>(G);
  }
  global_.classifier = std::move(mean);

  for (const auto& grp : selected_) ledger_.record_chain(grp.size(), r, SyncMode::PartSync);
  ++calibration_rounds_;

  RoundOutcome out;
  out.round = r;
  out.mode = SyncMode::PartSync;
  out.compensation_skips = std::accumulate(skips.begin(), skips.end(), std::size_t{0});
  return out;
}

void Simulation::finish_round(const RoundOutcome& out) {
  const int r = out.round;
  ledger_.add_compute_seconds(r, config_.compute_seconds_per_round);
  compensation_skips_ += out.compensation_skips;

  const auto eval = evaluate(global_, population_.test_set);
  const auto totals = ledger_.round_totals(r);
  RoundMetrics row;
  row.round = r;
  row.mode = to_string(out.mode);
  row.M = M_;
  row.acc = eval.accuracy;
  row.loss = eval.loss;
  row.bytes_up = totals.bytes_up;
  row.bytes_down = totals.bytes_down;
  row.cum_bytes = ledger_.total_bytes();
  row.sim_time_s = ledger_.total_seconds();
  row.median_cpd = median_cpd_;
  row.updated_params = ledger_.params_synced();
  metrics_.push_back(row);

  if (config_.probe_round >= 0 && r >= config_.probe_round) {
    if (r == config_.probe_round) {
      for (std::size_t k = 0; k < config_.K; ++k) {
        for (auto& ex : batch_for(static_cast<int>(k), r)) {
          if (config_.probe_class < 0 || ex.label == config_.probe_class) {
            probe_.batch.push_back(std::move(ex));
          }
        }
      }
    }
    if (!probe_.batch.empty()) probe_.series.push_back(evaluate(global_, probe_.batch).accuracy);
  }
}

RoundOutcome Simulation::step() {
  if (done()) throw std::logic_error("simulation already finished");
  const int r = round_;
  RoundOutcome out = is_full_sync_round(r, period()) ? full_sync_round(r) : calibration_round(r);
  out.M = M_;
  out.selected_groups = selected_;
  out.median_cpd = median_cpd_;
  finish_round(out);
  out.global_params = flatten(global_);
  ++round_;
  return out;
}

ExperimentResult Simulation::run() {
  while (!done()) step();
  ExperimentResult res;
  res.rounds = metrics_;
  res.final_model = global_;
  res.final_eval = evaluate(global_, population_.test_set);
  res.bytes_up = ledger_.total_up();
  res.bytes_down = ledger_.total_down();
  res.sim_seconds = ledger_.total_seconds();
  res.scale = ledger_.scale();
  res.probe = probe_;
  res.compensation_skips = compensation_skips_;
  res.full_sync_rounds = full_rounds_;
  res.calibration_rounds = calibration_rounds_;
  return res;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  Simulation sim(config);
  return sim.run();
}

}  // namespace hfedms
