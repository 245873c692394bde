#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ruralsense/ids.hpp"

namespace ruralsense::protocol {

enum class Channel { CellularData, D2D, SMS };

constexpr std::string_view to_string(Channel c) noexcept {
  switch (c) {
    case Channel::CellularData: return "CellularData";
    case Channel::D2D: return "D2D";
    case Channel::SMS: return "SMS";
  }
  return "?";
}

struct GeoTag {
  double lat = 0.0;
  double lon = 0.0;

  friend bool operator==(const GeoTag&, const GeoTag&) = default;
};

/// Sizes and labels of what the farmer captured. Media content is not modelled.
struct PayloadDescriptor {
  std::uint64_t photo_bytes = 0;
  std::uint64_t voice_bytes = 0;
  std::vector<std::string> labels;
  GeoTag geotag;

  std::uint64_t total_bytes() const noexcept { return photo_bytes + voice_bytes; }

  friend bool operator==(const PayloadDescriptor&, const PayloadDescriptor&) = default;
};

struct QueryEvent {
  EventId eid = 0;
  UserId uid;
  DeviceId logical_device;
  Seconds created_at = 0;
  PayloadDescriptor payload;

  EventKey key() const { return {uid, eid}; }

  friend bool operator==(const QueryEvent&, const QueryEvent&) = default;
};

enum class EnvelopeKind { Query, Ack, Response, Alert };

constexpr std::string_view to_string(EnvelopeKind k) noexcept {
  switch (k) {
    case EnvelopeKind::Query: return "Query";
    case EnvelopeKind::Ack: return "Ack";
    case EnvelopeKind::Response: return "Response";
    case EnvelopeKind::Alert: return "Alert";
  }
  return "?";
}

/// A protocol message. `hops` starts at the originating node and only grows.
struct Envelope {
  EnvelopeKind kind = EnvelopeKind::Query;
  std::optional<EventId> eid;
  UserId uid;
  DeviceId target_device;
  Seconds sent_at = 0;
  std::vector<std::string> hops;
  Channel channel = Channel::CellularData;

  std::optional<QueryEvent> query;     // Query only
  std::string body;                    // Response / Alert text
  std::optional<std::uint64_t> alert_id;  // Alert only; used for duplicate suppression

  void append_hop(std::string node) { hops.push_back(std::move(node)); }

  friend bool operator==(const Envelope&, const Envelope&) = default;
};

struct TimerConfig {
  Seconds t_r = 86400;        // response deadline measured from event creation
  Seconds t_d = 3600;         // ACK deadline measured from each transmission
  Seconds scan_period = 300;  // Mode-1(b) polling interval
  std::optional<std::uint32_t> max_retries;  // unset: retry until t_r

  bool valid() const noexcept { return t_d > 0 && t_d < t_r && scan_period > 0; }

  friend bool operator==(const TimerConfig&, const TimerConfig&) = default;
};

enum class RecordState { StoredLocal, Sent, Acked, Completed, Discarded };

constexpr std::string_view to_string(RecordState s) noexcept {
  switch (s) {
    case RecordState::StoredLocal: return "StoredLocal";
    case RecordState::Sent: return "Sent";
    case RecordState::Acked: return "Acked";
    case RecordState::Completed: return "Completed";
    case RecordState::Discarded: return "Discarded";
  }
  return "?";
}

constexpr bool is_terminal(RecordState s) noexcept {
  return s == RecordState::Completed || s == RecordState::Discarded;
}

/// Farmer-side lifecycle of one query.
///
/// `ack_deadline` is set exactly while the record is Sent. `response_deadline`
/// is fixed at creation. `updated_at` is the time of the most recent transition
/// and lets the state machine reject clocks that run backwards.
struct FarmerEventRecord {
  QueryEvent event;
  RecordState state = RecordState::StoredLocal;
  std::optional<Seconds> ack_deadline;
  Seconds response_deadline = 0;
  std::uint32_t retries = 0;
  std::optional<RelayId> last_relay;
  Seconds updated_at = 0;
  bool payload_held = true;

  EventKey key() const { return event.key(); }

  friend bool operator==(const FarmerEventRecord&, const FarmerEventRecord&) = default;
};

}  // namespace ruralsense::protocol
