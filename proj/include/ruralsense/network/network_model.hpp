#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ruralsense/error.hpp"
#include "ruralsense/ids.hpp"

namespace ruralsense::net {

/// None permits only D2D. Poor permits SMS and rescanning. Good also carries data uploads.
enum class SignalLevel { None, Poor, Good };

constexpr std::string_view to_string(SignalLevel s) noexcept {
  switch (s) {
    case SignalLevel::None: return "None";
    case SignalLevel::Poor: return "Poor";
    case SignalLevel::Good: return "Good";
  }
  return "?";
}

inline std::optional<SignalLevel> parse_signal(std::string_view s) {
  if (s == "None") return SignalLevel::None;
  if (s == "Poor") return SignalLevel::Poor;
  if (s == "Good") return SignalLevel::Good;
  return std::nullopt;
}

/// Piecewise-constant timeline. Breakpoints are strictly increasing and the first sits at t=0.
template <class Level>
class Timeline {
 public:
  struct Breakpoint {
    Seconds start = 0;
    Level level{};

    friend bool operator==(const Breakpoint&, const Breakpoint&) = default;
  };

  Timeline() : points_{{0, Level{}}} {}
  explicit Timeline(Level constant) : points_{{0, constant}} {}
  explicit Timeline(std::vector<Breakpoint> points) : points_(std::move(points)) {}

  /// Empty string when well formed, otherwise a description of the violation.
  std::string check() const {
    if (points_.empty()) return "timeline has no breakpoints";
    if (points_.front().start != 0) return "first breakpoint must be at t=0";
    for (std::size_t i = 1; i < points_.size(); ++i) {
      if (points_[i].start <= points_[i - 1].start) return "breakpoints must be strictly increasing";
    }
    return {};
  }

  /// Level of the last breakpoint at or before t.
  Level at(Seconds t) const {
    auto it = std::upper_bound(points_.begin(), points_.end(), t,
                               [](Seconds v, const Breakpoint& b) { return v < b.start; });
    if (it == points_.begin()) return points_.front().level;
    return std::prev(it)->level;
  }

  /// True when every instant of [from, to) has a level satisfying pred.
  template <class Pred>
  bool holds_over(Seconds from, Seconds to, Pred pred) const {
    if (!pred(at(from))) return false;
    for (const auto& b : points_) {
      if (b.start > from && b.start < to && !pred(b.level)) return false;
    }
    return true;
  }

  template <class Pred>
  bool ever(Seconds from, Seconds to, Pred pred) const {
    return !holds_over(from, to, [&](Level l) { return !pred(l); });
  }

  const std::vector<Breakpoint>& breakpoints() const noexcept { return points_; }

 private:
  std::vector<Breakpoint> points_;
};

using SignalSchedule = Timeline<SignalLevel>;
using SmsSchedule = Timeline<bool>;

/// Two-state alternation starting with `first` at t=0, expanded up to `until`.
inline SignalSchedule alternating_signal(SignalLevel first, SignalLevel second, Seconds dwell_first,
                                         Seconds dwell_second, Seconds until) {
  std::vector<SignalSchedule::Breakpoint> pts;
  Seconds t = 0;
  bool on_first = true;
  while (t < until || pts.empty()) {
    pts.push_back({t, on_first ? first : second});
    t += on_first ? dwell_first : dwell_second;
    on_first = !on_first;
  }
  return SignalSchedule(std::move(pts));
}

/// A relay's stay in D2D range of a farmer cluster, half-open [arrive, depart).
struct Visit {
  std::set<DeviceId> cluster;
  Seconds arrive = 0;
  Seconds depart = 0;

  bool covers(Seconds t) const noexcept { return arrive <= t && t < depart; }

  friend bool operator==(const Visit&, const Visit&) = default;
};

struct LinkModel {
  std::uint64_t d2d_bytes_per_second = 1'000'000;
  std::uint64_t server_bytes_per_second = 250'000;
  std::uint32_t capacity = 8;

  bool valid() const noexcept {
    return d2d_bytes_per_second > 0 && server_bytes_per_second > 0 && capacity >= 1;
  }

  friend bool operator==(const LinkModel&, const LinkModel&) = default;
};

/// ceil(bytes / rate), with at least one second for any non-empty transfer.
constexpr Seconds transfer_time(std::uint64_t bytes, std::uint64_t bytes_per_second) {
  if (bytes == 0) return 0;
  const std::uint64_t secs = (bytes + bytes_per_second - 1) / bytes_per_second;
  return static_cast<Seconds>(std::max<std::uint64_t>(secs, 1));
}

/// Visits every `period` seconds starting at `first`, each lasting `dwell`, with arrive < until.
inline std::vector<Visit> periodic_visits(const std::set<DeviceId>& cluster, Seconds first, Seconds period,
                                          Seconds dwell, Seconds until) {
  std::vector<Visit> out;
  if (period <= 0 || dwell <= 0) return out;
  for (Seconds t = first; t < until; t += period) out.push_back({cluster, t, t + dwell});
  return out;
}

/// Seeded stochastic visit plan: gaps and dwell times drawn uniformly from the given
/// inclusive ranges. Uses mt19937_64 with a plain modulo reduction so expansions are
/// identical across standard libraries.
inline std::vector<Visit> random_visits(const std::set<DeviceId>& cluster, Seconds start, Seconds until,
                                        std::pair<Seconds, Seconds> gap, std::pair<Seconds, Seconds> dwell,
                                        std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto draw = [&](std::pair<Seconds, Seconds> range) {
    const auto span = static_cast<std::uint64_t>(range.second - range.first) + 1;
    return range.first + static_cast<Seconds>(rng() % span);
  };
  std::vector<Visit> out;
  Seconds t = start + draw(gap);
  while (t < until) {
    const Seconds d = std::max<Seconds>(1, draw(dwell));
    out.push_back({cluster, t, t + d});
    t += d + std::max<Seconds>(1, draw(gap));
  }
  return out;
}

enum class Admission { Admitted, Rejected };

/// Read-only environment: who hears what, and when.
class Network {
 public:
  explicit Network(LinkModel link = {}) : link_(link) {}

  void add_device(const DeviceId& id, SignalSchedule signal, std::optional<SmsSchedule> sms = std::nullopt) {
    devices_[id] = DeviceEnv{std::move(signal), std::move(sms)};
  }

  void add_relay(const RelayId& id, SignalSchedule signal, std::vector<Visit> visits,
                 std::optional<std::uint32_t> capacity = std::nullopt) {
    std::sort(visits.begin(), visits.end(), [](const Visit& a, const Visit& b) { return a.arrive < b.arrive; });
    relays_[id] = RelayEnv{std::move(signal), std::move(visits), capacity.value_or(link_.capacity)};
  }

  const LinkModel& link() const noexcept { return link_; }

  SignalLevel signal_at(std::string_view node, Seconds t) const {
    if (auto it = devices_.find(DeviceId(std::string(node))); it != devices_.end()) return it->second.signal.at(t);
    if (auto it = relays_.find(RelayId(std::string(node))); it != relays_.end()) return it->second.signal.at(t);
    throw ProtocolError(Errc::UnknownNode, std::string(node));
  }
  SignalLevel signal_at(const DeviceId& d, Seconds t) const { return device(d).signal.at(t); }
  SignalLevel signal_at(const RelayId& r, Seconds t) const { return relay(r).signal.at(t); }

  /// SMS reachability defaults to "signal is Poor or Good" unless an explicit schedule exists.
  bool sms_reachable(const DeviceId& d, Seconds t) const {
    const auto& env = device(d);
    if (env.sms) return env.sms->at(t);
    return env.signal.at(t) != SignalLevel::None;
  }

  bool relay_link(const RelayId& r, Seconds t) const { return signal_at(r, t) == SignalLevel::Good; }

  const Visit* visit_at(const RelayId& r, Seconds t) const {
    for (const auto& v : relay(r).visits) {
      if (v.covers(t)) return &v;
      if (v.arrive > t) break;
    }
    return nullptr;
  }

  bool in_contact(const RelayId& r, const DeviceId& d, Seconds t) const {
    const Visit* v = visit_at(r, t);
    return v != nullptr && v->cluster.count(d) > 0;
  }

  std::set<std::pair<RelayId, DeviceId>> contacts_at(Seconds t) const {
    std::set<std::pair<RelayId, DeviceId>> out;
    for (const auto& [rid, env] : relays_) {
      if (const Visit* v = visit_at(rid, t)) {
        for (const auto& d : v->cluster) out.emplace(rid, d);
      }
    }
    return out;
  }

  std::set<RelayId> relays_in_contact(const DeviceId& d, Seconds t) const {
    std::set<RelayId> out;
    for (const auto& [rid, env] : relays_) {
      if (in_contact(rid, d, t)) out.insert(rid);
    }
    return out;
  }

  std::set<DeviceId> devices_in_contact(const RelayId& r, Seconds t) const {
    const Visit* v = visit_at(r, t);
    return v ? v->cluster : std::set<DeviceId>{};
  }

  std::uint32_t capacity(const RelayId& r) const { return relay(r).capacity; }

  Admission admit(const RelayId& r, const DeviceId& d, Seconds t, std::uint32_t active_sessions) const {
    if (!in_contact(r, d, t)) throw ProtocolError(Errc::NoContact, r.str() + " not in range of " + d.str());
    return active_sessions < capacity(r) ? Admission::Admitted : Admission::Rejected;
  }

  bool has_device(const DeviceId& d) const { return devices_.count(d) > 0; }
  bool has_relay(const RelayId& r) const { return relays_.count(r) > 0; }

  const SignalSchedule& device_signal(const DeviceId& d) const { return device(d).signal; }
  const std::optional<SmsSchedule>& device_sms(const DeviceId& d) const { return device(d).sms; }
  const SignalSchedule& relay_signal(const RelayId& r) const { return relay(r).signal; }
  const std::vector<Visit>& visits(const RelayId& r) const { return relay(r).visits; }

 private:
  struct DeviceEnv {
    SignalSchedule signal;
    std::optional<SmsSchedule> sms;
  };
  struct RelayEnv {
    SignalSchedule signal;
    std::vector<Visit> visits;
    std::uint32_t capacity = 1;
  };

  const DeviceEnv& device(const DeviceId& d) const {
    auto it = devices_.find(d);
    if (it == devices_.end()) throw ProtocolError(Errc::UnknownNode, d.str());
    return it->second;
  }
  const RelayEnv& relay(const RelayId& r) const {
    auto it = relays_.find(r);
    if (it == relays_.end()) throw ProtocolError(Errc::UnknownNode, r.str());
    return it->second;
  }

  LinkModel link_;
  std::map<DeviceId, DeviceEnv> devices_;
  std::map<RelayId, RelayEnv> relays_;
};

}  // namespace ruralsense::net
