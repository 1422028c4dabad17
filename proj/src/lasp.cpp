#include "hfedms/lasp.hpp"

#include <cmath>

#include "hfedms/error.hpp"

namespace hfedms {

void LinkModel::validate() const {
  if (!(rate_up_bps > 0.0) || !(rate_down_bps > 0.0) || !std::isfinite(rate_up_bps) ||
      !std::isfinite(rate_down_bps)) {
    throw InvalidInput("link rates must be positive and finite");
  }
  if (bytes_per_param == 0) throw InvalidInput("bytes_per_param must be positive");
}

std::string to_string(SyncMode mode) {
  return mode == SyncMode::FullSync ? "full" : "part";
}

TrafficLedger::TrafficLedger(ParamScale scale, LinkModel link) : scale_(scale), link_(link) {
  link_.validate();
  if (scale_.full == 0 || scale_.classifier == 0) throw InvalidInput("parameter counts must be positive");
  if (scale_.classifier > scale_.full) throw InvalidInput("classifier larger than the whole model");
}

std::uint64_t TrafficLedger::params_for(SyncMode mode) const {
  return mode == SyncMode::FullSync ? scale_.full : scale_.classifier;
}

LedgerEntry& TrafficLedger::entry_for(int round, SyncMode mode) {
  if (round < 0) throw InvalidInput("negative round");
  if (!entries_.empty()) {
    auto& last = entries_.back();
    if (round < last.round) throw InvalidInput("ledger rounds must not go backwards");
    if (round == last.round) {
      if (last.mode != mode) throw InvalidInput("round already booked under another sync mode");
      return last;
    }
  }
  entries_.push_back({round, mode, 0, 0, 0.0});
  return entries_.back();
}

void TrafficLedger::record_sync(const SyncEvent& event, int round, SyncMode mode) {
  if (event.params_moved == 0) throw InvalidInput("sync event moves no parameters");
  if (event.params_moved != params_for(mode)) {
    throw InvalidInput("sync event carries " + std::to_string(event.params_moved) +
                       " parameters, " + to_string(mode) + " sync moves " +
                       std::to_string(params_for(mode)));
  }
  auto& e = entry_for(round, mode);
  const std::uint64_t bytes = event.params_moved * link_.bytes_per_param;
  std::uint64_t up = 0, down = 0;
  switch (event.kind) {
    case SyncKind::Pull:
    case SyncKind::Scatter: down = bytes; break;
    case SyncKind::Push: up = bytes; break;
    case SyncKind::Relay: up = bytes; down = bytes; break;
  }
  e.bytes_up += up;
  e.bytes_down += down;
  total_up_ += up;
  total_down_ += down;
  const double secs = runtime_estimate(static_cast<double>(up + down), link_);
  e.seconds += secs;
  total_seconds_ += secs;
}

void TrafficLedger::record_chain(std::size_t group_size, int round, SyncMode mode) {
  if (group_size == 0) throw InvalidInput("empty group");
  const std::uint64_t p = params_for(mode);
  record_sync({SyncKind::Pull, p}, round, mode);
  for (std::size_t i = 1; i < group_size; ++i) record_sync({SyncKind::Relay, p}, round, mode);
  record_sync({SyncKind::Push, p}, round, mode);
}

void TrafficLedger::record_scatter(std::size_t clients, int round, SyncMode mode) {
  const std::uint64_t p = params_for(mode);
  for (std::size_t i = 0; i < clients; ++i) record_sync({SyncKind::Scatter, p}, round, mode);
}

void TrafficLedger::add_compute_seconds(int round, double seconds) {
  if (!(seconds >= 0.0)) throw InvalidInput("compute time must be non-negative");
  if (seconds == 0.0) return;
  auto mode = entries_.empty() || entries_.back().round != round ? SyncMode::FullSync
                                                                  : entries_.back().mode;
  auto& e = entry_for(round, mode);
  e.seconds += seconds;
  total_seconds_ += seconds;
}

LedgerEntry TrafficLedger::round_totals(int round) const {
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    if (it->round == round) return *it;
    if (it->round < round) break;
  }
  return {round, SyncMode::FullSync, 0, 0, 0.0};
}

double closed_form_traffic_s(double kappa, double num_clients, double model_params, double rounds) {
  return 8.0 * kappa * num_clients * model_params * rounds;
}

double closed_form_traffic_d(double kappa, double num_clients, double model_params,
                             double classifier_params, long rounds, long period) {
  if (period < 1) throw InvalidInput("sync period must be at least 1");
  if (rounds <= 0) return 0.0;
  const long full = (rounds + period - 1) / period;
  const long part = rounds - full;
  return 4.0 * kappa * num_clients *
         (3.0 * model_params * static_cast<double>(full) +
          2.0 * static_cast<double>(part) * classifier_params);
}

double runtime_estimate(double total_bytes, const LinkModel& link) {
  const double half_bits = total_bytes * 8.0 / 2.0;
  return half_bits / link.rate_up_bps + half_bits / link.rate_down_bps;
}

double directional_runtime(double bytes_up, double bytes_down, const LinkModel& link) {
  return bytes_up * 8.0 / link.rate_up_bps + bytes_down * 8.0 / link.rate_down_bps;
}

}  // namespace hfedms
