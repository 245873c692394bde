#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ruralsense/error.hpp"
#include "ruralsense/ids.hpp"
#include "ruralsense/protocol/types.hpp"
#include "ruralsense/relay/auth_token.hpp"
#include "ruralsense/server/server_node.hpp"

namespace ruralsense::relay {

using protocol::Envelope;
using protocol::QueryEvent;

struct HotspotHandle {
  RelayId relay;
  std::uint32_t capacity = 0;
};

struct RegistrationResult {
  AuthToken token;
  bool handshake = false;  // false when served from the credential cache
};

struct Receipt {
  RelayId relay;
  EventKey key;
  Seconds received_at = 0;
  bool duplicate = false;
};

struct UpstreamEntry {
  QueryEvent event;
  Seconds received_at = 0;
  bool uploaded = false;
  std::vector<std::string> hops;
};

struct DownstreamEntry {
  Envelope env;
  Seconds fetched_at = 0;
  bool delivered = false;
};

struct CarryStore {
  std::vector<UpstreamEntry> upstream;
  std::vector<DownstreamEntry> downstream;
};

struct UploadOutcome {
  EventKey key;
  bool duplicate = false;
  std::optional<Seconds> response_at;
};

struct SyncReport {
  bool link = false;
  std::size_t uploaded = 0;
  std::size_t deferred = 0;
  std::vector<UploadOutcome> uploads;
  std::size_t acks = 0;
  std::size_t fetched = 0;
};

struct Session {
  DeviceId device;
  Seconds start = 0;
  Seconds end = 0;
};

/// Mobile relay: hotspot admission, credential cache, and a two-way carry store.
class RelayNode {
 public:
  explicit RelayNode(RelayId id) : id_(std::move(id)) {}

  const RelayId& id() const noexcept { return id_; }

  HotspotHandle open_hotspot(std::uint32_t capacity) {
    if (capacity_) throw ProtocolError(Errc::AlreadyOpen, id_.str());
    if (capacity < 1) throw ProtocolError(Errc::InvalidState, "hotspot capacity must be >= 1");
    capacity_ = capacity;
    return {id_, capacity};
  }

  bool hotspot_open() const noexcept { return capacity_.has_value(); }
  std::uint32_t capacity() const noexcept { return capacity_.value_or(0); }

  /// Cached per (uid, device): a second registration returns the same token without a handshake.
  RegistrationResult register_farmer(const UserId& uid, const DeviceId& device, const std::string& credentials,
                                     bool in_contact, Seconds now) {
    if (!in_contact) throw ProtocolError(Errc::NoContact, uid.str() + " not in range of " + id_.str());
    const Registration key{uid, device};
    if (auto it = tokens_.find(key); it != tokens_.end()) return {it->second, false};
    if (credentials.empty()) throw ProtocolError(Errc::BadCredentials, uid.str());
    AuthToken tok{id_, uid, device, now};
    tokens_.emplace(key, tok);
    return {tok, true};
  }

  bool is_valid(const AuthToken& t) const {
    auto it = tokens_.find({t.uid, t.device});
    return it != tokens_.end() && it->second == t;
  }

  std::uint32_t active_sessions(Seconds t) const {
    return static_cast<std::uint32_t>(
        std::count_if(sessions_.begin(), sessions_.end(), [t](const Session& s) { return s.start <= t && t < s.end; }));
  }

  /// Occupies one hotspot slot over [start, end).
  void open_session(const DeviceId& device, Seconds start, Seconds end) {
    if (!capacity_) throw ProtocolError(Errc::HotspotClosed, id_.str());
    const auto active = active_sessions(start);
    if (active >= *capacity_) throw ProtocolError(Errc::RelayFull, id_.str());
    sessions_.push_back({device, start, std::max(end, start + 1)});
    peak_sessions_ = std::max(peak_sessions_, active + 1);
  }

  std::uint32_t peak_sessions() const noexcept { return peak_sessions_; }

  /// Idempotent on (uid, eid): a repeat returns the original receipt.
  Receipt accept_query(const AuthToken& token, const QueryEvent& event, Seconds now, bool in_contact) {
    if (!capacity_) throw ProtocolError(Errc::HotspotClosed, id_.str());
    if (!is_valid(token) || token.uid != event.uid || token.device != event.logical_device) {
      throw ProtocolError(Errc::InvalidToken, event.uid.str());
    }
    if (!in_contact) throw ProtocolError(Errc::NoContact, event.uid.str());
    for (const auto& e : store_.upstream) {
      if (e.event.key() == event.key()) return {id_, event.key(), e.received_at, true};
    }
    store_.upstream.push_back({event, now, false, {event.logical_device.str(), id_.str()}});
    return {id_, event.key(), now, false};
  }

  /// Uploads pending queries FIFO, reports registrations, then pulls this relay's outbox.
  SyncReport sync_with_server(bool link_available, Seconds now, server::ServerNode& server) {
    SyncReport report;
    report.link = link_available;
    if (!link_available) {
      report.deferred = static_cast<std::size_t>(std::count_if(
          store_.upstream.begin(), store_.upstream.end(), [](const UpstreamEntry& e) { return !e.uploaded; }));
      return report;
    }

    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < store_.upstream.size(); ++i) {
      if (!store_.upstream[i].uploaded) order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const auto& ea = store_.upstream[a];
      const auto& eb = store_.upstream[b];
      if (ea.received_at != eb.received_at) return ea.received_at < eb.received_at;
      return ea.event.key() < eb.event.key();
    });

    for (auto i : order) {
      auto& entry = store_.upstream[i];
      Envelope env;
      env.kind = protocol::EnvelopeKind::Query;
      env.eid = entry.event.eid;
      env.uid = entry.event.uid;
      env.target_device = entry.event.logical_device;
      env.sent_at = now;
      env.hops = entry.hops;
      env.channel = protocol::Channel::CellularData;
      env.query = entry.event;
      auto result = server.ingest_query(env, now);
      entry.uploaded = true;
      ++report.uploaded;
      report.uploads.push_back({entry.event.key(), result.duplicate, result.response_at});
      store_.downstream.push_back({std::move(result.ack), now, false});
      ++report.acks;
    }

    server.update_relay_map(id_, registrations(), now);
    for (auto& env : server.fetch_for_relay(id_)) {
      store_.downstream.push_back({std::move(env), now, false});
      ++report.fetched;
    }
    return report;
  }

  /// Hands over every undelivered envelope addressed to a registered (uid, device) currently in range.
  std::vector<Envelope> deliver_downstream(const std::set<DeviceId>& in_range, Seconds now) {
    if (!capacity_) throw ProtocolError(Errc::HotspotClosed, id_.str());
    std::vector<Envelope> out;
    for (auto& entry : store_.downstream) {
      if (entry.delivered || entry.fetched_at > now) continue;
      const auto& env = entry.env;
      if (!in_range.count(env.target_device)) continue;
      if (!tokens_.count({env.uid, env.target_device})) continue;
      entry.delivered = true;
      Envelope copy = env;
      copy.channel = protocol::Channel::D2D;
      copy.append_hop(id_.str());
      out.push_back(std::move(copy));
    }
    return out;
  }

  std::set<Registration> registrations() const {
    std::set<Registration> out;
    for (const auto& [key, tok] : tokens_) out.insert(key);
    return out;
  }

  const CarryStore& store() const noexcept { return store_; }
  const std::vector<Session>& sessions() const noexcept { return sessions_; }

 private:
  RelayId id_;
  std::optional<std::uint32_t> capacity_;
  std::map<Registration, AuthToken> tokens_;
  std::vector<Session> sessions_;
  std::uint32_t peak_sessions_ = 0;
  CarryStore store_;
};

}  // namespace ruralsense::relay
