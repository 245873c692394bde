#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ruralsense/error.hpp"
#include "ruralsense/ids.hpp"
#include "ruralsense/sim/trace.hpp"

namespace ruralsense::sim {

struct LatencySummary {
  std::uint64_t count = 0;
  double mean = 0.0;
  Seconds p50 = 0;
  Seconds p95 = 0;
  Seconds max = 0;

  friend bool operator==(const LatencySummary&, const LatencySummary&) = default;
};

/// Nearest-rank percentiles; the mean is summed in ascending order so equal multisets give equal bits.
inline LatencySummary summarize(std::vector<Seconds> values) {
  LatencySummary s;
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  s.count = values.size();
  double sum = 0.0;
  for (auto v : values) sum += static_cast<double>(v);
  s.mean = sum / static_cast<double>(values.size());
  auto rank = [&](double p) {
    auto idx = static_cast<std::size_t>(std::ceil(p * static_cast<double>(values.size())));
    return values[std::max<std::size_t>(idx, 1) - 1];
  };
  s.p50 = rank(0.50);
  s.p95 = rank(0.95);
  s.max = values.back();
  return s;
}

struct Metrics {
  std::uint64_t queries_created = 0;
  std::uint64_t delivered_to_server = 0;
  std::uint64_t never_delivered = 0;
  std::uint64_t duplicates_suppressed = 0;
  std::uint64_t acks_received = 0;
  std::uint64_t responses_delivered_in_time = 0;
  std::uint64_t discards = 0;
  std::uint64_t in_flight_at_horizon = 0;
  std::uint64_t retransmissions = 0;
  std::uint64_t late_responses = 0;
  std::uint64_t rejected = 0;
  std::uint64_t alerts_delivered = 0;
  std::uint64_t peak_sessions = 0;
  LatencySummary ack_latency;
  LatencySummary response_latency;

  double delivery_ratio() const noexcept {
    return queries_created == 0 ? 0.0
                                : static_cast<double>(responses_delivered_in_time) / static_cast<double>(queries_created);
  }

  friend bool operator==(const Metrics&, const Metrics&) = default;
};

namespace detail {

inline std::string fixed3(double v) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << v;
  return os.str();
}

}  // namespace detail

/// Fixed key order of the metrics line format.
inline std::vector<std::pair<std::string, std::string>> metric_fields(const Metrics& m) {
  std::vector<std::pair<std::string, std::string>> f{
      {"queries_created", std::to_string(m.queries_created)},
      {"delivered_to_server", std::to_string(m.delivered_to_server)},
      {"never_delivered", std::to_string(m.never_delivered)},
      {"duplicates_suppressed", std::to_string(m.duplicates_suppressed)},
      {"acks_received", std::to_string(m.acks_received)},
      {"responses_delivered_in_time", std::to_string(m.responses_delivered_in_time)},
      {"discards", std::to_string(m.discards)},
      {"in_flight_at_horizon", std::to_string(m.in_flight_at_horizon)},
      {"retransmissions", std::to_string(m.retransmissions)},
      {"late_responses", std::to_string(m.late_responses)},
      {"rejected", std::to_string(m.rejected)},
      {"alerts_delivered", std::to_string(m.alerts_delivered)},
      {"peak_sessions", std::to_string(m.peak_sessions)},
      {"delivery_ratio", detail::fixed3(m.delivery_ratio())},
  };
  auto add_latency = [&](const std::string& p, const LatencySummary& s) {
    f.emplace_back(p + "_count", std::to_string(s.count));
    f.emplace_back(p + "_mean", detail::fixed3(s.mean));
    f.emplace_back(p + "_p50", std::to_string(s.p50));
    f.emplace_back(p + "_p95", std::to_string(s.p95));
    f.emplace_back(p + "_max", std::to_string(s.max));
  };
  add_latency("ack_latency", m.ack_latency);
  add_latency("response_latency", m.response_latency);
  return f;
}

inline std::string format_metrics_line(const Metrics& m) {
  std::string out;
  for (const auto& [k, v] : metric_fields(m)) {
    if (!out.empty()) out += ' ';
    out += k + "=" + v;
  }
  return out;
}

inline std::string format_metrics_table(const Metrics& m) {
  std::ostringstream os;
  for (const auto& [k, v] : metric_fields(m)) os << std::left << std::setw(30) << k << v << '\n';
  return os.str();
}

namespace detail {

inline EventKey record_key(const TraceRecord& r) {
  const auto* uid = r.get("uid");
  const auto* eid = r.get("eid");
  if (!uid || !eid) {
    throw ProtocolError(Errc::MalformedTrace, "record " + std::to_string(r.seq) + " lacks uid/eid");
  }
  try {
    return {UserId(*uid), std::stoull(*eid)};
  } catch (const std::logic_error&) {
    throw ProtocolError(Errc::MalformedTrace, "record " + std::to_string(r.seq) + " has bad eid");
  }
}

inline std::uint64_t counter(const TraceRecord& r, const std::string& key) {
  const auto* v = r.get(key);
  if (!v) throw ProtocolError(Errc::MalformedTrace, "record " + std::to_string(r.seq) + " lacks " + key);
  try {
    return std::stoull(*v);
  } catch (const std::logic_error&) {
    throw ProtocolError(Errc::MalformedTrace, "record " + std::to_string(r.seq) + " has bad " + key);
  }
}

inline void check_order(const std::vector<TraceRecord>& trace) {
  for (std::size_t i = 1; i < trace.size(); ++i) {
    if (trace[i].seq <= trace[i - 1].seq) throw ProtocolError(Errc::MalformedTrace, "seq not strictly increasing");
    if (trace[i].t < trace[i - 1].t) throw ProtocolError(Errc::MalformedTrace, "time runs backwards");
  }
}

}  // namespace detail

/// Recomputes every metric from the trace alone.
inline Metrics collect_metrics(const std::vector<TraceRecord>& trace) {
  detail::check_order(trace);
  Metrics m;
  std::map<EventKey, Seconds> created;
  std::vector<Seconds> ack_lat;
  std::vector<Seconds> resp_lat;
  auto created_at = [&](const TraceRecord& r) {
    auto it = created.find(detail::record_key(r));
    if (it == created.end()) {
      throw ProtocolError(Errc::MalformedTrace, "record " + std::to_string(r.seq) + " refers to unknown event");
    }
    return it->second;
  };

  for (const auto& r : trace) {
    switch (r.kind) {
      case TraceKind::EventCreated:
        if (!created.emplace(detail::record_key(r), r.t).second) {
          throw ProtocolError(Errc::MalformedTrace, "event created twice at seq " + std::to_string(r.seq));
        }
        ++m.queries_created;
        break;
      case TraceKind::Upload:
        created_at(r);
        if (detail::counter(r, "dup") == 0) {
          ++m.delivered_to_server;
        } else {
          ++m.duplicates_suppressed;
        }
        break;
      case TraceKind::AckDelivered:
        ++m.acks_received;
        ack_lat.push_back(r.t - created_at(r));
        break;
      case TraceKind::ResponseDelivered:
        ++m.responses_delivered_in_time;
        resp_lat.push_back(r.t - created_at(r));
        break;
      case TraceKind::Discard:
        created_at(r);
        ++m.discards;
        break;
      case TraceKind::Retransmit: ++m.retransmissions; break;
      case TraceKind::LateResponse: {
        const auto* msg = r.get("msg");
        const auto* reason = r.get("reason");
        if (!msg || !reason) throw ProtocolError(Errc::MalformedTrace, "LateResponse lacks msg/reason");
        if (*msg == "Response" && *reason == "discarded") ++m.late_responses;
        if (*reason == "completed") ++m.duplicates_suppressed;
        break;
      }
      case TraceKind::Rejected: ++m.rejected; break;
      case TraceKind::AlertDelivered: ++m.alerts_delivered; break;
      case TraceKind::Handoff:
        m.peak_sessions = std::max(m.peak_sessions, detail::counter(r, "sessions"));
        break;
      case TraceKind::NetworkChange:
      case TraceKind::Scan:
      case TraceKind::ResponseScheduled: break;
    }
  }
  if (m.responses_delivered_in_time + m.discards > m.queries_created) {
    throw ProtocolError(Errc::MalformedTrace, "more terminal outcomes than queries");
  }
  m.in_flight_at_horizon = m.queries_created - m.responses_delivered_in_time - m.discards;
  m.never_delivered = m.queries_created - std::min(m.delivered_to_server, m.queries_created);
  m.ack_latency = summarize(std::move(ack_lat));
  m.response_latency = summarize(std::move(resp_lat));
  return m;
}

/// Protocol-level safety properties checked over a finished trace. Empty result means all hold.
inline std::vector<std::string> audit_trace(const std::vector<TraceRecord>& trace) {
  std::vector<std::string> v;
  std::set<EventKey> uploaded, accepted, discarded, responded, scheduled;
  for (const auto& r : trace) {
    auto where = [&](const std::string& what) { return "seq " + std::to_string(r.seq) + ": " + what; };
    switch (r.kind) {
      case TraceKind::Upload: {
        const auto key = detail::record_key(r);
        uploaded.insert(key);
        if (detail::counter(r, "dup") == 0 && !accepted.insert(key).second) {
          v.push_back(where("second non-duplicate ingest"));
        }
        break;
      }
      case TraceKind::ResponseScheduled:
        if (!scheduled.insert(detail::record_key(r)).second) v.push_back(where("Response scheduled twice"));
        break;
      case TraceKind::AckDelivered:
        if (!uploaded.count(detail::record_key(r))) v.push_back(where("ACK before any upload"));
        break;
      case TraceKind::ResponseDelivered: {
        const auto key = detail::record_key(r);
        if (!uploaded.count(key)) v.push_back(where("Response before any upload"));
        if (discarded.count(key)) v.push_back(where("Response delivered after Discard"));
        if (!responded.insert(key).second) v.push_back(where("Response delivered twice"));
        break;
      }
      case TraceKind::Discard: {
        const auto key = detail::record_key(r);
        if (responded.count(key)) v.push_back(where("Discard after Response"));
        if (!discarded.insert(key).second) v.push_back(where("discarded twice"));
        break;
      }
      case TraceKind::Handoff:
        if (detail::counter(r, "sessions") > detail::counter(r, "capacity")) v.push_back(where("sessions exceed capacity"));
        break;
      default: break;
    }
  }
  return v;
}

}  // namespace ruralsense::sim
