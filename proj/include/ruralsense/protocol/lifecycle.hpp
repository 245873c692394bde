#pragma once

#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "ruralsense/error.hpp"
#include "ruralsense/protocol/types.hpp"

namespace ruralsense::protocol {

struct TransmitAttempt {
  Channel via = Channel::D2D;
  std::optional<RelayId> relay;
};
struct AckReceived {};
struct ResponseReceived {};
struct ClockTick {};

using LifecycleInput = std::variant<TransmitAttempt, AckReceived, ResponseReceived, ClockTick>;

enum class ProtocolAction { DeletePayload, EmitRetransmit, EmitDiscard, DeliverResponseToMailbox };

constexpr std::string_view to_string(ProtocolAction a) noexcept {
  switch (a) {
    case ProtocolAction::DeletePayload: return "DeletePayload";
    case ProtocolAction::EmitRetransmit: return "EmitRetransmit";
    case ProtocolAction::EmitDiscard: return "EmitDiscard";
    case ProtocolAction::DeliverResponseToMailbox: return "DeliverResponseToMailbox";
  }
  return "?";
}

struct Transition {
  FarmerEventRecord record;
  std::vector<ProtocolAction> actions;
};

struct Deadlines {
  Seconds ack_deadline = 0;
  Seconds response_deadline = 0;

  friend bool operator==(const Deadlines&, const Deadlines&) = default;
};

/// The response deadline is anchored at creation; only the ACK deadline moves with each send.
inline Deadlines compute_deadlines(const QueryEvent& event, Seconds send_time, const TimerConfig& cfg) {
  if (send_time < event.created_at) {
    throw ProtocolError(Errc::TimeReversal, "send_time precedes event creation");
  }
  return {send_time + cfg.t_d, event.created_at + cfg.t_r};
}

inline FarmerEventRecord make_record(QueryEvent event, const TimerConfig& cfg) {
  FarmerEventRecord rec;
  rec.response_deadline = event.created_at + cfg.t_r;
  rec.updated_at = event.created_at;
  rec.event = std::move(event);
  return rec;
}

namespace detail {

// A StoredLocal record with retries > 0 has been sent before, so a late ACK or
// Response for an earlier attempt is still meaningful.
inline bool was_sent_before(const FarmerEventRecord& r) {
  return r.state == RecordState::StoredLocal && r.retries > 0;
}

}  // namespace detail

/// Pure farmer-side transition function.
///
/// Inputs that do not apply to the current state (including anything arriving
/// after a terminal state) return the record unchanged with no actions.
/// Throws ProtocolError(TimeReversal) when `now` precedes the record's last update.
inline Transition next_state(const FarmerEventRecord& record, const LifecycleInput& input, Seconds now,
                             const TimerConfig& cfg) {
  if (now < record.updated_at || now < record.event.created_at) {
    throw ProtocolError(Errc::TimeReversal,
                        "now=" + std::to_string(now) + " < updated_at=" + std::to_string(record.updated_at));
  }
  Transition out{record, {}};
  if (is_terminal(record.state)) return out;

  FarmerEventRecord& rec = out.record;
  auto move_to = [&](RecordState s) {
    rec.state = s;
    rec.updated_at = now;
    if (s != RecordState::Sent) rec.ack_deadline.reset();
  };

  std::visit(
      [&](const auto& in) {
        using T = std::decay_t<decltype(in)>;
        if constexpr (std::is_same_v<T, TransmitAttempt>) {
          if (rec.state != RecordState::StoredLocal) return;
          move_to(RecordState::Sent);
          rec.ack_deadline = compute_deadlines(rec.event, now, cfg).ack_deadline;
          rec.last_relay = in.relay;
        } else if constexpr (std::is_same_v<T, AckReceived>) {
          if (rec.state != RecordState::Sent && !detail::was_sent_before(rec)) return;
          move_to(RecordState::Acked);
          out.actions.push_back(ProtocolAction::DeletePayload);
        } else if constexpr (std::is_same_v<T, ResponseReceived>) {
          if (rec.state != RecordState::Sent && rec.state != RecordState::Acked &&
              !detail::was_sent_before(rec)) {
            return;
          }
          move_to(RecordState::Completed);
          out.actions.push_back(ProtocolAction::DeliverResponseToMailbox);
        } else {
          if (now >= rec.response_deadline) {
            move_to(RecordState::Discarded);
            out.actions.push_back(ProtocolAction::EmitDiscard);
            return;
          }
          if (rec.state != RecordState::Sent || now < *rec.ack_deadline) return;
          if (cfg.max_retries && rec.retries >= *cfg.max_retries) {
            move_to(RecordState::Discarded);
            out.actions.push_back(ProtocolAction::EmitDiscard);
            return;
          }
          move_to(RecordState::StoredLocal);
          ++rec.retries;
          out.actions.push_back(ProtocolAction::EmitRetransmit);
        }
      },
      input);
  return out;
}

}  // namespace ruralsense::protocol
