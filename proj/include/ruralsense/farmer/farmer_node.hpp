#pragma once

#include <map>
#include <optional>
#include <set>
#include <utility>
#include <variant>
#include <vector>

#include "ruralsense/error.hpp"
#include "ruralsense/ids.hpp"
#include "ruralsense/network/network_model.hpp"
#include "ruralsense/protocol/envelope.hpp"
#include "ruralsense/protocol/lifecycle.hpp"
#include "ruralsense/protocol/types.hpp"
#include "ruralsense/relay/auth_token.hpp"

namespace ruralsense::farmer {

using protocol::Envelope;
using protocol::EnvelopeKind;
using protocol::FarmerEventRecord;
using protocol::PayloadDescriptor;
using protocol::ProtocolAction;
using protocol::RecordState;
using protocol::TimerConfig;

struct DirectNow {
  protocol::Channel channel = protocol::Channel::CellularData;
  friend bool operator==(const DirectNow&, const DirectNow&) = default;
};
struct WaitAndRescan {
  Seconds next_scan = 0;
  friend bool operator==(const WaitAndRescan&, const WaitAndRescan&) = default;
};
struct HandoffToRelay {
  RelayId relay;
  friend bool operator==(const HandoffToRelay&, const HandoffToRelay&) = default;
};
struct NoPath {
  friend bool operator==(const NoPath&, const NoPath&) = default;
};

using AccessDecision = std::variant<DirectNow, WaitAndRescan, HandoffToRelay, NoPath>;

inline std::string_view decision_name(const AccessDecision& d) {
  static constexpr std::string_view names[] = {"DirectNow", "WaitAndRescan", "HandoffToRelay", "NoPath"};
  return names[d.index()];
}

/// Access network selection. Good signal always wins; otherwise any relay in
/// range is used (lowest id), otherwise Poor keeps polling and None waits.
inline AccessDecision scan_and_select(const DeviceId& /*node*/, Seconds now, net::SignalLevel signal,
                                      const std::set<RelayId>& contacts, const TimerConfig& cfg) {
  if (signal == net::SignalLevel::Good) return DirectNow{};
  if (!contacts.empty()) return HandoffToRelay{*contacts.begin()};
  if (signal == net::SignalLevel::Poor) return WaitAndRescan{now + cfg.scan_period};
  return NoPath{};
}

/// Lowest relay in range, skipping `avoid` whenever another relay is available.
inline std::optional<RelayId> select_relay(const std::set<RelayId>& contacts, const std::optional<RelayId>& avoid) {
  if (contacts.empty()) return std::nullopt;
  for (const auto& r : contacts) {
    if (!avoid || r != *avoid) return r;
  }
  return *contacts.begin();
}

struct MailboxEntry {
  std::optional<EventId> eid;  // unset for alerts
  std::string body;
  Seconds delivered_at = 0;
  bool read = false;

  friend bool operator==(const MailboxEntry&, const MailboxEntry&) = default;
};

class Mailbox {
 public:
  Mailbox() = default;
  explicit Mailbox(UserId owner) : owner_(std::move(owner)) {}

  const UserId& owner() const noexcept { return owner_; }
  const std::vector<MailboxEntry>& entries() const noexcept { return entries_; }

  /// False if a response for this eid is already present.
  bool add_response(EventId eid, std::string body, Seconds at) {
    for (const auto& e : entries_) {
      if (e.eid == eid) return false;
    }
    entries_.push_back({eid, std::move(body), at, false});
    return true;
  }

  void add_alert(std::string body, Seconds at) { entries_.push_back({std::nullopt, std::move(body), at, false}); }

  std::vector<MailboxEntry> read_all() {
    std::vector<MailboxEntry> out = entries_;
    for (auto& e : entries_) e.read = true;
    return out;
  }

 private:
  UserId owner_;
  std::vector<MailboxEntry> entries_;
};

struct LoginSession {
  UserId uid;
  DeviceId device;
  Seconds started_at = 0;

  friend bool operator==(const LoginSession&, const LoginSession&) = default;
};

/// Facts about the D2D link at handoff time, supplied by the environment.
struct D2DLink {
  bool in_contact = false;
  net::Admission admission = net::Admission::Admitted;
  std::uint64_t bytes_per_second = 1;
};

struct D2DTransfer {
  RelayId relay;
  protocol::QueryEvent event;
  Seconds started_at = 0;
  Seconds completes_at = 0;
};

enum class Disposition {
  AckApplied,
  ResponseApplied,
  AlertStored,
  AlertDuplicate,
  AfterDiscard,    // record already Discarded: late
  AfterCompleted,  // record already Completed: duplicate copy
  Redundant,       // record live but input did not apply (e.g. second Ack)
  Unknown,         // no such (uid, eid) on this device
};

constexpr std::string_view to_string(Disposition d) noexcept {
  switch (d) {
    case Disposition::AckApplied: return "AckApplied";
    case Disposition::ResponseApplied: return "ResponseApplied";
    case Disposition::AlertStored: return "AlertStored";
    case Disposition::AlertDuplicate: return "AlertDuplicate";
    case Disposition::AfterDiscard: return "discarded";
    case Disposition::AfterCompleted: return "completed";
    case Disposition::Redundant: return "redundant";
    case Disposition::Unknown: return "unknown";
  }
  return "?";
}

struct DownstreamOutcome {
  Disposition disposition = Disposition::Unknown;
  std::vector<ProtocolAction> actions;
  std::vector<UserId> alert_recipients;
};

struct FarmerStats {
  std::uint64_t acks_received = 0;
  std::uint64_t late_responses = 0;    // Responses for records already Discarded
  std::uint64_t duplicate_copies = 0;  // Ack/Response copies for records already Completed
  std::uint64_t stray_downstream = 0;  // every dropped Ack/Response
  std::uint64_t alerts_stored = 0;
  std::map<EventKey, Seconds> acked_at;
  std::map<EventKey, Seconds> completed_at;
};

/// One handset. Holds every resident user's records and mailboxes; all calls on
/// a node are assumed to be serialized by the caller.
class FarmerNode {
 public:
  FarmerNode(DeviceId device, TimerConfig cfg) : device_(std::move(device)), cfg_(cfg) {}

  const DeviceId& device() const noexcept { return device_; }
  const TimerConfig& timers() const noexcept { return cfg_; }

  void add_resident(const UserId& uid) {
    residents_.insert(uid);
    mailboxes_.try_emplace(uid, uid);
  }
  const std::set<UserId>& residents() const noexcept { return residents_; }

  LoginSession login(const UserId& uid, Seconds now) {
    if (session_) {
      if (session_->uid != uid) {
        throw ProtocolError(Errc::DeviceBusy, device_.str() + " in use by " + session_->uid.str());
      }
      return *session_;
    }
    session_ = LoginSession{uid, device_, now};
    add_resident(uid);
    return *session_;
  }

  void logout() noexcept { session_.reset(); }
  const std::optional<LoginSession>& session() const noexcept { return session_; }

  /// Entries for the session's own uid only; marks them read.
  std::vector<MailboxEntry> fetch_mailbox(const LoginSession& s) {
    require_session(s);
    auto it = mailboxes_.find(s.uid);
    if (it == mailboxes_.end()) return {};
    return it->second.read_all();
  }

  const FarmerEventRecord& create_event(const LoginSession& s, PayloadDescriptor payload, Seconds now) {
    require_session(s);
    if (payload.total_bytes() == 0) throw ProtocolError(Errc::EmptyPayload, "payload has no bytes");
    protocol::QueryEvent ev;
    ev.eid = ++eid_counter_[s.uid];
    ev.uid = s.uid;
    ev.logical_device = s.device;
    ev.created_at = now;
    ev.payload = std::move(payload);
    auto rec = protocol::make_record(std::move(ev), cfg_);
    auto [it, inserted] = records_.emplace(rec.key(), std::move(rec));
    return it->second;
  }

  /// Mode-1 upload. Returns no envelope if the record expired first.
  std::pair<FarmerEventRecord, std::optional<Envelope>> transmit_direct(const EventKey& key, Seconds now,
                                                                        net::SignalLevel signal) {
    FarmerEventRecord& rec = mutable_record(key);
    if (expire_if_due(rec, now)) return {rec, std::nullopt};
    if (rec.state != RecordState::StoredLocal) {
      throw ProtocolError(Errc::InvalidState, "record is " + std::string(to_string(rec.state)));
    }
    if (signal != net::SignalLevel::Good) throw ProtocolError(Errc::BadSignal, "direct upload needs Good signal");
    apply(rec, protocol::TransmitAttempt{protocol::Channel::CellularData, std::nullopt}, now);

    Envelope env;
    env.kind = EnvelopeKind::Query;
    env.eid = rec.event.eid;
    env.uid = rec.event.uid;
    env.target_device = rec.event.logical_device;
    env.sent_at = now;
    env.hops = {device_.str()};
    env.channel = protocol::Channel::CellularData;
    env.query = rec.event;
    return {rec, std::move(env)};
  }

  /// Mode-2 handoff. The ACK clock starts here, not at the relay's upload.
  std::pair<FarmerEventRecord, std::optional<D2DTransfer>> handoff_to_relay(
      const EventKey& key, const RelayId& relay, const std::optional<relay::AuthToken>& token, Seconds now,
      const D2DLink& link) {
    FarmerEventRecord& rec = mutable_record(key);
    if (expire_if_due(rec, now)) return {rec, std::nullopt};
    if (rec.state != RecordState::StoredLocal) {
      throw ProtocolError(Errc::InvalidState, "record is " + std::string(to_string(rec.state)));
    }
    if (!link.in_contact) throw ProtocolError(Errc::NoContact, relay.str());
    if (!token || token->relay != relay || token->uid != key.uid || token->device != device_) {
      throw ProtocolError(Errc::NotRegistered, key.uid.str() + " on " + relay.str());
    }
    if (link.admission == net::Admission::Rejected) throw ProtocolError(Errc::RelayFull, relay.str());

    apply(rec, protocol::TransmitAttempt{protocol::Channel::D2D, relay}, now);
    D2DTransfer xfer{relay, rec.event, now,
                     now + net::transfer_time(rec.event.payload.total_bytes(), link.bytes_per_second)};
    return {rec, std::move(xfer)};
  }

  DownstreamOutcome handle_downstream(const Envelope& env, Seconds now) {
    if (auto err = protocol::validate_envelope(env)) {
      throw ProtocolError(Errc::MalformedEnvelope, std::string(protocol::to_string(*err)));
    }
    if (env.kind == EnvelopeKind::Query) throw ProtocolError(Errc::MalformedEnvelope, "Query sent downstream");

    DownstreamOutcome out;
    if (env.kind == EnvelopeKind::Alert) {
      if (env.alert_id && !seen_alerts_.insert(*env.alert_id).second) {
        out.disposition = Disposition::AlertDuplicate;
        return out;
      }
      for (const auto& uid : residents_) {
        mailboxes_.try_emplace(uid, uid).first->second.add_alert(env.body, now);
        out.alert_recipients.push_back(uid);
      }
      out.disposition = Disposition::AlertStored;
      ++stats_.alerts_stored;
      return out;
    }

    const EventKey key{env.uid, *env.eid};
    auto it = records_.find(key);
    if (it == records_.end() || env.target_device != device_) {
      out.disposition = Disposition::Unknown;
      ++stats_.stray_downstream;
      return out;
    }
    FarmerEventRecord& rec = it->second;
    if (rec.state == RecordState::Discarded) {
      out.disposition = Disposition::AfterDiscard;
      if (env.kind == EnvelopeKind::Response) ++stats_.late_responses;
      ++stats_.stray_downstream;
      return out;
    }
    if (rec.state == RecordState::Completed) {
      out.disposition = Disposition::AfterCompleted;
      ++stats_.duplicate_copies;
      ++stats_.stray_downstream;
      return out;
    }

    const bool is_ack = env.kind == EnvelopeKind::Ack;
    protocol::LifecycleInput input = is_ack ? protocol::LifecycleInput{protocol::AckReceived{}}
                                            : protocol::LifecycleInput{protocol::ResponseReceived{}};
    out.actions = apply(rec, input, now);
    if (out.actions.empty()) {
      out.disposition = Disposition::Redundant;
      ++stats_.stray_downstream;
      return out;
    }
    if (is_ack) {
      out.disposition = Disposition::AckApplied;
      ++stats_.acks_received;
      stats_.acked_at.emplace(key, now);
    } else {
      out.disposition = Disposition::ResponseApplied;
      stats_.completed_at.emplace(key, now);
      mailboxes_.try_emplace(env.uid, env.uid).first->second.add_response(*env.eid, env.body, now);
    }
    return out;
  }

  /// ClockTick for every live record, in key order.
  std::vector<std::pair<EventKey, ProtocolAction>> on_timer(Seconds now) {
    std::vector<std::pair<EventKey, ProtocolAction>> out;
    for (auto& [key, rec] : records_) {
      if (protocol::is_terminal(rec.state)) continue;
      for (auto a : apply(rec, protocol::ClockTick{}, now)) out.emplace_back(key, a);
    }
    return out;
  }

  std::vector<EventKey> stored_local() const {
    std::vector<EventKey> out;
    for (const auto& [key, rec] : records_) {
      if (rec.state == RecordState::StoredLocal) out.push_back(key);
    }
    return out;
  }

  /// Deadline times at which on_timer may change something.
  std::set<Seconds> pending_deadlines() const {
    std::set<Seconds> out;
    for (const auto& [key, rec] : records_) {
      if (protocol::is_terminal(rec.state)) continue;
      out.insert(rec.response_deadline);
      if (rec.ack_deadline) out.insert(*rec.ack_deadline);
    }
    return out;
  }

  void store_token(const relay::AuthToken& t) { tokens_.insert_or_assign({t.relay, t.uid}, t); }
  std::optional<relay::AuthToken> token_for(const RelayId& r, const UserId& uid) const {
    auto it = tokens_.find({r, uid});
    if (it == tokens_.end()) return std::nullopt;
    return it->second;
  }

  const FarmerEventRecord& record(const EventKey& key) const {
    auto it = records_.find(key);
    if (it == records_.end()) throw ProtocolError(Errc::UnknownRecord, key.uid.str() + "/" + std::to_string(key.eid));
    return it->second;
  }
  const std::map<EventKey, FarmerEventRecord>& records() const noexcept { return records_; }

  const Mailbox* mailbox(const UserId& uid) const {
    auto it = mailboxes_.find(uid);
    return it == mailboxes_.end() ? nullptr : &it->second;
  }

  const FarmerStats& stats() const noexcept { return stats_; }

 private:
  void require_session(const LoginSession& s) const {
    if (!session_ || *session_ != s) throw ProtocolError(Errc::NoActiveSession, device_.str());
  }

  FarmerEventRecord& mutable_record(const EventKey& key) {
    auto it = records_.find(key);
    if (it == records_.end()) throw ProtocolError(Errc::UnknownRecord, key.uid.str() + "/" + std::to_string(key.eid));
    return it->second;
  }

  bool expire_if_due(FarmerEventRecord& rec, Seconds now) {
    if (now < rec.response_deadline || protocol::is_terminal(rec.state)) return protocol::is_terminal(rec.state);
    apply(rec, protocol::ClockTick{}, now);
    return true;
  }

  std::vector<ProtocolAction> apply(FarmerEventRecord& rec, const protocol::LifecycleInput& in, Seconds now) {
    auto step = protocol::next_state(rec, in, now, cfg_);
    rec = std::move(step.record);
    for (auto a : step.actions) {
      if (a == ProtocolAction::DeletePayload) release_payload(rec);
    }
    if (protocol::is_terminal(rec.state)) release_payload(rec);
    return std::move(step.actions);
  }

  static void release_payload(FarmerEventRecord& rec) {
    if (!rec.payload_held) return;
    rec.payload_held = false;
    rec.event.payload.photo_bytes = 0;
    rec.event.payload.voice_bytes = 0;
  }

  DeviceId device_;
  TimerConfig cfg_;
  std::optional<LoginSession> session_;
  std::set<UserId> residents_;
  std::map<UserId, Mailbox> mailboxes_;
  std::map<UserId, EventId> eid_counter_;
  std::map<EventKey, FarmerEventRecord> records_;
  std::map<std::pair<RelayId, UserId>, relay::AuthToken> tokens_;
  std::set<std::uint64_t> seen_alerts_;
  FarmerStats stats_;
};

}  // namespace ruralsense::farmer
