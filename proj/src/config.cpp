#include "hfedms/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>

#include "hfedms/error.hpp"

namespace hfedms {

using nlohmann::json;

Growth parse_growth(const std::string& name) {
  if (name == "linear") return Growth::Linear;
  if (name == "log") return Growth::Log;
  if (name == "exp") return Growth::Exp;
  throw ConfigError("unknown growth function '" + name + "' (expected linear, log or exp)");
}

std::string to_string(Growth g) {
  switch (g) {
    case Growth::Linear: return "linear";
    case Growth::Log: return "log";
    case Growth::Exp: return "exp";
  }
  return "?";
}

ExperimentMode parse_mode(const std::string& name) {
  if (name == "hfedms-d") return ExperimentMode::HFedMSD;
  if (name == "hfedms-s") return ExperimentMode::HFedMSS;
  if (name == "fedavg") return ExperimentMode::FedAvg;
  if (name == "static-groups") return ExperimentMode::StaticGroups;
  throw ConfigError("unknown mode '" + name +
                    "' (expected hfedms-d, hfedms-s, fedavg or static-groups)");
}

std::string to_string(ExperimentMode mode) {
  switch (mode) {
    case ExperimentMode::HFedMSD: return "hfedms-d";
    case ExperimentMode::HFedMSS: return "hfedms-s";
    case ExperimentMode::FedAvg: return "fedavg";
    case ExperimentMode::StaticGroups: return "static-groups";
  }
  return "?";
}

void SchedulerConfig::validate() const {
  if (T < 1) throw ConfigError("T must be at least 1");
  if (R < 1) throw ConfigError("rounds must be at least 1");
  if (!(kappa > 0.0 && kappa <= 1.0)) throw ConfigError("kappa must lie in (0, 1]");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be positive");
  if (beta < 1) throw ConfigError("beta must be at least 1");
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be finite and non-negative");
  if (minibatch < 1) throw ConfigError("minibatch must be at least 1");
  if (local_epochs < 1) throw ConfigError("local_epochs must be at least 1");
}

void ExperimentConfig::validate() const {
  sched.validate();
  if (csv_path.empty() && K < 1) throw ConfigError("K must be at least 1");
  if (F < 2) throw ConfigError("F must be at least 2");
  if (feature_dim < 1) throw ConfigError("feature_dim must be at least 1");
  if (n < 1) throw ConfigError("n must be at least 1");
  if (!(skew > 0.0)) throw ConfigError("skew must be positive");
  if (!(class_sep >= 0.0)) throw ConfigError("class_sep must be non-negative");
  if (csv_path.empty() && test_per_class < 1) throw ConfigError("test_per_class must be at least 1");
  if (csv_path.empty() && sched.kappa * static_cast<double>(K) < 1.0) {
    throw ConfigError("kappa * K must be at least 1");
  }
  if (extractor_dims.size() < 2) throw ConfigError("extractor_dims needs at least two entries");
  for (auto d : extractor_dims) {
    if (d < 1) throw ConfigError("extractor_dims entries must be positive");
  }
  if (extractor_dims.front() != feature_dim) {
    throw ConfigError("extractor_dims[0] = " + std::to_string(extractor_dims.front()) +
                      " does not match feature_dim = " + std::to_string(feature_dim));
  }
  if (vanish_class >= static_cast<int>(F)) throw ConfigError("vanish_class out of range");
  if (probe_class >= static_cast<int>(F)) throw ConfigError("probe_class out of range");
  if (probe_round >= sched.R) throw ConfigError("probe_round beyond the last round");
  if (scc && *scc && mode != ExperimentMode::HFedMSD) {
    throw ConfigError("scc is only available in hfedms-d mode");
  }
  if (accounting_params_classifier > accounting_params_total) {
    throw ConfigError("accounting_params_classifier exceeds accounting_params_total");
  }
  if ((accounting_params_total == 0) != (accounting_params_classifier == 0)) {
    throw ConfigError("set both accounting_params_total and accounting_params_classifier, or neither");
  }
  if (bytes_per_param < 1) throw ConfigError("bytes_per_param must be positive");
  if (!(rate_up_bps > 0.0) || !(rate_down_bps > 0.0)) throw ConfigError("link rates must be positive");
  if (!(compute_seconds_per_round >= 0.0)) {
    throw ConfigError("compute_seconds_per_round must be non-negative");
  }
  if (workers < 1) throw ConfigError("workers must be at least 1");
  if (icg_max_iters < 0) throw ConfigError("icg_max_iters must be non-negative");
  if (!(icg_tol >= 0.0)) throw ConfigError("icg_tol must be non-negative");
  if (!(mmd_bandwidth >= 0.0)) throw ConfigError("mmd_bandwidth must be non-negative");
}

namespace {

struct Field {
  std::function<void(ExperimentConfig&, const json&)> set;
  std::function<json(const ExperimentConfig&)> get;
};

template <typename T>
Field plain(T ExperimentConfig::*member) {
  return {[member](ExperimentConfig& c, const json& v) { c.*member = v.get<T>(); },
          [member](const ExperimentConfig& c) { return json(c.*member); }};
}

template <typename T>
Field sched(T SchedulerConfig::*member) {
  return {[member](ExperimentConfig& c, const json& v) { c.sched.*member = v.get<T>(); },
          [member](const ExperimentConfig& c) { return json(c.sched.*member); }};
}

// Non-negative integers arrive as JSON numbers; reject negatives before the
// unsigned conversion wraps them.
template <typename T>
Field count(T ExperimentConfig::*member) {
  return {[member](ExperimentConfig& c, const json& v) {
            if (!v.is_number_integer()) throw ConfigError("expected an integer");
            if (v.get<long long>() < 0) throw ConfigError("must be non-negative");
            c.*member = v.get<T>();
          },
          [member](const ExperimentConfig& c) { return json(c.*member); }};
}

Field optional_bool(std::optional<bool> ExperimentConfig::*member) {
  return {[member](ExperimentConfig& c, const json& v) {
            if (v.is_string() && v.get<std::string>() == "auto") {
              (c.*member).reset();
            } else {
              c.*member = v.get<bool>();
            }
          },
          [member](const ExperimentConfig& c) {
            return (c.*member) ? json(*(c.*member)) : json("auto");
          }};
}

const std::map<std::string, Field>& fields() {
  static const std::map<std::string, Field> table = [] {
    std::map<std::string, Field> t;
    t["seed"] = count(&ExperimentConfig::seed);
    t["mode"] = {[](ExperimentConfig& c, const json& v) { c.mode = parse_mode(v.get<std::string>()); },
                 [](const ExperimentConfig& c) { return json(to_string(c.mode)); }};
    t["rounds"] = sched(&SchedulerConfig::R);
    t["T"] = sched(&SchedulerConfig::T);
    t["kappa"] = sched(&SchedulerConfig::kappa);
    t["growth"] = {
        [](ExperimentConfig& c, const json& v) { c.sched.growth = parse_growth(v.get<std::string>()); },
        [](const ExperimentConfig& c) { return json(to_string(c.sched.growth)); }};
    t["alpha"] = sched(&SchedulerConfig::alpha);
    t["beta"] = sched(&SchedulerConfig::beta);
    t["lr"] = sched(&SchedulerConfig::lr);
    t["minibatch"] = {[](ExperimentConfig& c, const json& v) {
                        if (!v.is_number_integer() || v.get<long long>() < 1) {
                          throw ConfigError("expected a positive integer");
                        }
                        c.sched.minibatch = v.get<std::size_t>();
                      },
                      [](const ExperimentConfig& c) { return json(c.sched.minibatch); }};
    t["local_epochs"] = sched(&SchedulerConfig::local_epochs);

    t["K"] = count(&ExperimentConfig::K);
    t["F"] = count(&ExperimentConfig::F);
    t["feature_dim"] = count(&ExperimentConfig::feature_dim);
    t["skew"] = plain(&ExperimentConfig::skew);
    t["class_sep"] = plain(&ExperimentConfig::class_sep);
    t["test_per_class"] = count(&ExperimentConfig::test_per_class);
    t["n"] = count(&ExperimentConfig::n);
    t["data_mode"] = {[](ExperimentConfig& c, const json& v) {
                        const auto s = v.get<std::string>();
                        if (s == "stream") {
                          c.data_mode = DataMode::Stream;
                        } else if (s == "static") {
                          c.data_mode = DataMode::Static;
                        } else {
                          throw ConfigError("expected stream or static");
                        }
                      },
                      [](const ExperimentConfig& c) {
                        return json(c.data_mode == DataMode::Stream ? "stream" : "static");
                      }};
    t["vanish_class"] = plain(&ExperimentConfig::vanish_class);
    t["vanish_round"] = plain(&ExperimentConfig::vanish_round);
    t["csv_path"] = plain(&ExperimentConfig::csv_path);
    t["csv_replacement"] = plain(&ExperimentConfig::csv_replacement);
    t["csv_jitter"] = plain(&ExperimentConfig::csv_jitter);
    t["csv_test_every"] = count(&ExperimentConfig::csv_test_every);

    t["extractor_dims"] = {[](ExperimentConfig& c, const json& v) {
                             if (!v.is_array()) throw ConfigError("expected an array");
                             std::vector<std::size_t> dims;
                             for (const auto& d : v) {
                               if (!d.is_number_integer() || d.get<long long>() < 1) {
                                 throw ConfigError("expected positive integers");
                               }
                               dims.push_back(d.get<std::size_t>());
                             }
                             c.extractor_dims = std::move(dims);
                           },
                           [](const ExperimentConfig& c) { return json(c.extractor_dims); }};
    t["activation"] = {
        [](ExperimentConfig& c, const json& v) {
          try {
            c.activation = parse_activation(v.get<std::string>());
          } catch (const InvalidInput& e) {
            throw ConfigError(e.what());
          }
        },
        [](const ExperimentConfig& c) { return json(to_string(c.activation)); }};

    t["Q"] = count(&ExperimentConfig::Q);
    t["scc"] = optional_bool(&ExperimentConfig::scc);
    t["scc_compensate"] = plain(&ExperimentConfig::scc_compensate);

    t["accounting_params_total"] = count(&ExperimentConfig::accounting_params_total);
    t["accounting_params_classifier"] = count(&ExperimentConfig::accounting_params_classifier);
    t["bytes_per_param"] = count(&ExperimentConfig::bytes_per_param);
    t["rate_up_bps"] = plain(&ExperimentConfig::rate_up_bps);
    t["rate_down_bps"] = plain(&ExperimentConfig::rate_down_bps);
    t["scatter_on_full_sync"] = optional_bool(&ExperimentConfig::scatter_on_full_sync);
    t["compute_seconds_per_round"] = plain(&ExperimentConfig::compute_seconds_per_round);

    t["workers"] = count(&ExperimentConfig::workers);
    t["probe_round"] = plain(&ExperimentConfig::probe_round);
    t["probe_class"] = plain(&ExperimentConfig::probe_class);
    t["icg_max_iters"] = plain(&ExperimentConfig::icg_max_iters);
    t["icg_tol"] = plain(&ExperimentConfig::icg_tol);
    t["mmd_bandwidth"] = plain(&ExperimentConfig::mmd_bandwidth);
    t["metrics_csv"] = plain(&ExperimentConfig::metrics_csv);
    t["summary_json"] = plain(&ExperimentConfig::summary_json);
    return t;
  }();
  return table;
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  ExperimentConfig cfg;
  const auto& table = fields();
  for (const auto& [key, value] : j.items()) {
    const auto it = table.find(key);
    if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
    try {
      it->second.set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError("config key '" + key + "': " + e.what());
    } catch (const json::exception& e) {
      throw ConfigError("config key '" + key + "' has the wrong type: " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

json to_json(const ExperimentConfig& cfg) {
  json j = json::object();
  for (const auto& [key, field] : fields()) j[key] = field.get(cfg);
  return j;
}

json read_config_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  try {
    return json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  try {
    return config_from_json(read_config_json(path));
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    if (msg.rfind(path.string(), 0) == 0) throw;
    throw ConfigError(path.string() + ": " + msg);
  }
}

}  // namespace hfedms
