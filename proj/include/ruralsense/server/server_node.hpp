#pragma once

#include <cstdint>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ruralsense/error.hpp"
#include "ruralsense/ids.hpp"
#include "ruralsense/network/network_model.hpp"
#include "ruralsense/protocol/envelope.hpp"
#include "ruralsense/protocol/types.hpp"

namespace ruralsense::server {

using protocol::Channel;
using protocol::Envelope;
using protocol::EnvelopeKind;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace detail

/// Stand-in for the advisory back end. Latency and body are pure functions of (uid, eid, seed).
struct ExpertStub {
  enum class Latency { Fixed, Uniform };

  Latency kind = Latency::Fixed;
  Seconds min_latency = 1800;
  Seconds max_latency = 1800;
  std::uint64_t seed = 0;

  static ExpertStub fixed(Seconds latency, std::uint64_t seed = 0) {
    return {Latency::Fixed, latency, latency, seed};
  }
  static ExpertStub uniform(Seconds lo, Seconds hi, std::uint64_t seed) { return {Latency::Uniform, lo, hi, seed}; }

  std::uint64_t mix(const EventKey& key, std::uint64_t salt) const noexcept {
    return detail::splitmix64(detail::fnv1a(key.uid.str()) ^ detail::splitmix64(key.eid ^ (seed * 31 + salt)));
  }

  Seconds latency(const EventKey& key) const noexcept {
    if (kind == Latency::Fixed) return min_latency;
    const auto span = static_cast<std::uint64_t>(max_latency - min_latency) + 1;
    return min_latency + static_cast<Seconds>(mix(key, 1) % span);
  }

  std::string response_body(const EventKey& key) const {
    std::ostringstream os;
    os << "advisory for " << key.uid << "#" << key.eid << " ref " << std::hex << std::setw(16) << std::setfill('0')
       << mix(key, 2);
    return os.str();
  }
};

enum class ResponseState { Pending, Scheduled, Sent };

struct LedgerEntry {
  Seconds first_received_at = 0;
  std::vector<std::string> source_path;
  ResponseState response_state = ResponseState::Pending;
  DeviceId target_device;
  Seconds response_at = 0;
  Envelope ack;
};

using IngestLedger = std::map<EventKey, LedgerEntry>;
using RelayMap = std::map<RelayId, std::set<Registration>>;

struct IngestResult {
  Envelope ack;
  bool duplicate = false;
  std::optional<Seconds> response_at;  // set only when this ingest scheduled the Response
};

struct Direct {
  Channel channel = Channel::SMS;
  friend bool operator==(const Direct&, const Direct&) = default;
};
struct ViaRelay {
  std::set<RelayId> relays;
  friend bool operator==(const ViaRelay&, const ViaRelay&) = default;
};
struct NoRoute {
  friend bool operator==(const NoRoute&, const NoRoute&) = default;
};

using DeliveryPlan = std::variant<Direct, ViaRelay, NoRoute>;

/// Alert fan-out target. Empty optional means every known farmer.
using AlertTargets = std::optional<std::set<UserId>>;

/// Expert-system endpoint. Every downstream envelope dispatched here ends up
/// in exactly one place: the direct queue, one or more relay outboxes, or the
/// parked list.
class ServerNode {
 public:
  ServerNode(const net::Network& network, ExpertStub expert, std::map<UserId, DeviceId> directory = {})
      : network_(&network), expert_(expert), directory_(std::move(directory)) {}

  const ExpertStub& expert() const noexcept { return expert_; }

  /// Exactly-once ingest. Duplicates get back the original Ack unchanged.
  IngestResult ingest_query(const Envelope& env, Seconds now) {
    if (env.kind != EnvelopeKind::Query) throw ProtocolError(Errc::MalformedQuery, "not a Query envelope");
    if (auto err = protocol::validate_envelope(env)) {
      throw ProtocolError(Errc::MalformedQuery, std::string(protocol::to_string(*err)));
    }
    const auto& q = *env.query;
    const EventKey key = q.key();
    if (auto it = ledger_.find(key); it != ledger_.end()) {
      ++duplicates_;
      return {it->second.ack, true, std::nullopt};
    }
    Envelope ack;
    ack.kind = EnvelopeKind::Ack;
    ack.eid = q.eid;
    ack.uid = q.uid;
    ack.target_device = q.logical_device;
    ack.sent_at = now;
    ack.hops = {std::string(kServerId)};
    ack.channel = env.channel;

    LedgerEntry entry;
    entry.first_received_at = now;
    entry.source_path = env.hops;
    entry.source_path.emplace_back(kServerId);
    entry.response_state = ResponseState::Scheduled;
    entry.target_device = q.logical_device;
    entry.response_at = now + expert_.latency(key);
    entry.ack = ack;
    const Seconds at = entry.response_at;
    ledger_.emplace(key, std::move(entry));
    return {std::move(ack), false, at};
  }

  /// Produces the expert Response once its latency has elapsed.
  Envelope release_response(const EventKey& key, Seconds now) {
    auto it = ledger_.find(key);
    if (it == ledger_.end()) throw ProtocolError(Errc::UnknownRecord, key.uid.str() + "/" + std::to_string(key.eid));
    it->second.response_state = ResponseState::Sent;
    Envelope env;
    env.kind = EnvelopeKind::Response;
    env.eid = key.eid;
    env.uid = key.uid;
    env.target_device = it->second.target_device;
    env.sent_at = now;
    env.hops = {std::string(kServerId)};
    env.body = expert_.response_body(key);
    return env;
  }

  /// SMS first, then cellular data, then every relay that has the (uid, device) registered.
  DeliveryPlan route_downstream(const Envelope& env, Seconds now) const {
    if ((env.kind == EnvelopeKind::Ack || env.kind == EnvelopeKind::Response) &&
        ledger_.count({env.uid, env.eid.value_or(0)}) == 0) {
      throw ProtocolError(Errc::UnknownRecord, "downstream envelope without ledger entry");
    }
    if (network_->sms_reachable(env.target_device, now)) return Direct{Channel::SMS};
    if (network_->signal_at(env.target_device, now) == net::SignalLevel::Good) return Direct{Channel::CellularData};
    ViaRelay via;
    const Registration reg{env.uid, env.target_device};
    for (const auto& [relay, regs] : relay_map_) {
      if (regs.count(reg)) via.relays.insert(relay);
    }
    if (!via.relays.empty()) return via;
    return NoRoute{};
  }

  DeliveryPlan dispatch(Envelope env, Seconds now) {
    DeliveryPlan plan = route_downstream(env, now);
    if (const auto* d = std::get_if<Direct>(&plan)) {
      env.channel = d->channel;
      direct_out_.push_back(std::move(env));
    } else if (const auto* v = std::get_if<ViaRelay>(&plan)) {
      for (const auto& r : v->relays) outbox_[r].push_back(env);
    } else {
      parked_.push_back(std::move(env));
    }
    return plan;
  }

  /// Monotone union; re-routes anything parked once the map grows.
  void update_relay_map(const RelayId& relay, const std::set<Registration>& regs, Seconds now) {
    auto& known = relay_map_[relay];
    const auto before = known.size();
    known.insert(regs.begin(), regs.end());
    if (known.size() != before) retry_parked(now);
  }

  void retry_parked(Seconds now) {
    std::vector<Envelope> pending;
    pending.swap(parked_);
    for (auto& env : pending) dispatch(std::move(env), now);
  }

  std::vector<Envelope> fetch_for_relay(const RelayId& relay) {
    auto it = outbox_.find(relay);
    if (it == outbox_.end()) return {};
    std::vector<Envelope> out;
    out.swap(it->second);
    return out;
  }

  /// One Alert per target, each routed independently.
  std::vector<Envelope> send_alert(const AlertTargets& targets, const std::string& body, Seconds now) {
    std::vector<UserId> uids;
    if (targets) {
      uids.assign(targets->begin(), targets->end());
    } else {
      for (const auto& [uid, dev] : directory_) uids.push_back(uid);
    }
    std::vector<Envelope> out;
    for (const auto& uid : uids) {
      auto it = directory_.find(uid);
      if (it == directory_.end()) throw ProtocolError(Errc::UnknownNode, "alert target " + uid.str());
      Envelope env;
      env.kind = EnvelopeKind::Alert;
      env.uid = uid;
      env.target_device = it->second;
      env.sent_at = now;
      env.hops = {std::string(kServerId)};
      env.body = body;
      env.alert_id = ++alert_counter_;
      out.push_back(env);
      dispatch(std::move(env), now);
    }
    return out;
  }

  std::vector<Envelope> take_direct() {
    std::vector<Envelope> out;
    out.swap(direct_out_);
    return out;
  }

  const IngestLedger& ledger() const noexcept { return ledger_; }
  const RelayMap& relay_map() const noexcept { return relay_map_; }
  const std::vector<Envelope>& parked() const noexcept { return parked_; }
  std::size_t outbox_size(const RelayId& r) const {
    auto it = outbox_.find(r);
    return it == outbox_.end() ? 0 : it->second.size();
  }
  std::uint64_t duplicates() const noexcept { return duplicates_; }

 private:
  const net::Network* network_;
  ExpertStub expert_;
  std::map<UserId, DeviceId> directory_;
  IngestLedger ledger_;
  RelayMap relay_map_;
  std::map<RelayId, std::vector<Envelope>> outbox_;
  std::vector<Envelope> parked_;
  std::vector<Envelope> direct_out_;
  std::uint64_t duplicates_ = 0;
  std::uint64_t alert_counter_ = 0;
};

}  // namespace ruralsense::server
