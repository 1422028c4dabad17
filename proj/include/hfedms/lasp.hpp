#pragma once

// Byte accounting for model exchange over a slow asymmetric uplink/downlink,
// plus the closed-form totals it has to agree with.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace hfedms {

struct LinkModel {
  double rate_up_bps = 4e6;
  double rate_down_bps = 7e6;
  std::uint64_t bytes_per_param = 4;

  void validate() const;
};

enum class SyncMode { FullSync, PartSync };
std::string to_string(SyncMode mode);

// Pull: server -> first client. Relay: client -> next client, booked as an
// upload plus a download. Push: last client -> server. Scatter: server ->
// client after aggregation.
enum class SyncKind { Pull, Relay, Push, Scatter };

struct SyncEvent {
  SyncKind kind = SyncKind::Pull;
  std::uint64_t params_moved = 0;
};

// Parameter counts used for accounting: whole model and classifier only.
struct ParamScale {
  std::uint64_t full = 0;
  std::uint64_t classifier = 0;
};

struct LedgerEntry {
  int round = 0;
  SyncMode mode = SyncMode::FullSync;
  std::uint64_t bytes_up = 0;
  std::uint64_t bytes_down = 0;
  double seconds = 0.0;
};

class TrafficLedger {
 public:
  TrafficLedger(ParamScale scale, LinkModel link);

  // Throws InvalidInput if the event carries the wrong parameter count for
  // `mode`, or if `round` precedes the last recorded round.
  void record_sync(const SyncEvent& event, int round, SyncMode mode);

  // One sequential chain over `group_size` clients: pull, relays, push.
  void record_chain(std::size_t group_size, int round, SyncMode mode);
  void record_scatter(std::size_t clients, int round, SyncMode mode);
  void add_compute_seconds(int round, double seconds);

  std::uint64_t params_for(SyncMode mode) const;

  const std::vector<LedgerEntry>& entries() const { return entries_; }
  std::uint64_t total_up() const { return total_up_; }
  std::uint64_t total_down() const { return total_down_; }
  std::uint64_t total_bytes() const { return total_up_ + total_down_; }
  double total_seconds() const { return total_seconds_; }
  // Sum of parameters transferred over every hop.
  std::uint64_t params_synced() const { return total_bytes() / link_.bytes_per_param; }

  // Bytes of the entry for `round`, or zeros when the round moved nothing.
  LedgerEntry round_totals(int round) const;

  const LinkModel& link() const { return link_; }
  const ParamScale& scale() const { return scale_; }

 private:
  LedgerEntry& entry_for(int round, SyncMode mode);

  ParamScale scale_;
  LinkModel link_;
  std::vector<LedgerEntry> entries_;
  std::uint64_t total_up_ = 0;
  std::uint64_t total_down_ = 0;
  double total_seconds_ = 0.0;
};

// 8 * kappa * K * M * R bytes: every participating client moves the model
// twice per round at 4 bytes per parameter.
double closed_form_traffic_s(double kappa, double num_clients, double model_params, double rounds);

// 4 * kappa * K * (3 M ceil(R/T) + 2 (R - ceil(R/T)) M_c) bytes.
double closed_form_traffic_d(double kappa, double num_clients, double model_params,
                             double classifier_params, long rounds, long period);

// Traffic split evenly between directions, both serialised.
double runtime_estimate(double total_bytes, const LinkModel& link);

// Each direction at its own rate, serialised.
double directional_runtime(double bytes_up, double bytes_down, const LinkModel& link);

constexpr double kTiB = 1099511627776.0;  // 2^40
inline double to_tib(double bytes) { return bytes / kTiB; }
inline double to_hours(double seconds) { return seconds / 3600.0; }

}  // namespace hfedms
