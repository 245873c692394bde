#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ruralsense/error.hpp"
#include "ruralsense/ids.hpp"

namespace ruralsense::sim {

enum class TraceKind {
  NetworkChange,
  EventCreated,
  Scan,
  Handoff,
  Upload,
  AckDelivered,
  ResponseScheduled,
  ResponseDelivered,
  Retransmit,
  Discard,
  LateResponse,
  Rejected,
  AlertDelivered,
};

inline constexpr TraceKind kAllTraceKinds[] = {
    TraceKind::NetworkChange,     TraceKind::EventCreated, TraceKind::Scan,         TraceKind::Handoff,
    TraceKind::Upload,            TraceKind::AckDelivered, TraceKind::ResponseScheduled,
    TraceKind::ResponseDelivered, TraceKind::Retransmit,   TraceKind::Discard,      TraceKind::LateResponse,
    TraceKind::Rejected,          TraceKind::AlertDelivered,
};

constexpr std::string_view to_string(TraceKind k) noexcept {
  switch (k) {
    case TraceKind::NetworkChange: return "NetworkChange";
    case TraceKind::EventCreated: return "EventCreated";
    case TraceKind::Scan: return "Scan";
    case TraceKind::Handoff: return "Handoff";
    case TraceKind::Upload: return "Upload";
    case TraceKind::AckDelivered: return "AckDelivered";
    case TraceKind::ResponseScheduled: return "ResponseScheduled";
    case TraceKind::ResponseDelivered: return "ResponseDelivered";
    case TraceKind::Retransmit: return "Retransmit";
    case TraceKind::Discard: return "Discard";
    case TraceKind::LateResponse: return "LateResponse";
    case TraceKind::Rejected: return "Rejected";
    case TraceKind::AlertDelivered: return "AlertDelivered";
  }
  return "?";
}

inline std::optional<TraceKind> parse_trace_kind(std::string_view s) {
  for (auto k : kAllTraceKinds) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

using Detail = std::map<std::string, std::string>;

struct TraceRecord {
  std::uint64_t seq = 0;
  Seconds t = 0;
  std::string node;
  TraceKind kind = TraceKind::NetworkChange;
  Detail detail;  // sorted by key, which fixes the serialized field order

  const std::string* get(const std::string& key) const {
    auto it = detail.find(key);
    return it == detail.end() ? nullptr : &it->second;
  }

  friend bool operator==(const TraceRecord&, const TraceRecord&) = default;
};

/// `seq=.. t=.. node=.. kind=.. k1=v1 k2=v2 ...`, detail keys ascending. Values never contain spaces.
inline std::string format_line(const TraceRecord& r) {
  std::ostringstream os;
  os << "seq=" << r.seq << " t=" << r.t << " node=" << r.node << " kind=" << to_string(r.kind);
  for (const auto& [k, v] : r.detail) os << ' ' << k << '=' << v;
  return os.str();
}

inline std::string format_trace(const std::vector<TraceRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += format_line(r);
    out += '\n';
  }
  return out;
}

inline TraceRecord parse_line(std::string_view line) {
  auto bad = [&](const std::string& why) -> ProtocolError {
    return ProtocolError(Errc::MalformedTrace, why + " in '" + std::string(line) + "'");
  };
  std::vector<std::pair<std::string, std::string>> fields;
  std::size_t pos = 0;
  while (pos < line.size()) {
    auto end = line.find(' ', pos);
    if (end == std::string_view::npos) end = line.size();
    auto tok = line.substr(pos, end - pos);
    pos = end + 1;
    if (tok.empty()) throw bad("empty field");
    auto eq = tok.find('=');
    if (eq == std::string_view::npos || eq == 0) throw bad("field without key=value");
    fields.emplace_back(std::string(tok.substr(0, eq)), std::string(tok.substr(eq + 1)));
  }
  if (fields.size() < 4 || fields[0].first != "seq" || fields[1].first != "t" || fields[2].first != "node" ||
      fields[3].first != "kind") {
    throw bad("header must be seq t node kind");
  }
  TraceRecord r;
  try {
    std::size_t used = 0;
    r.seq = std::stoull(fields[0].second, &used);
    if (used != fields[0].second.size()) throw bad("bad seq");
    r.t = std::stoll(fields[1].second, &used);
    if (used != fields[1].second.size()) throw bad("bad t");
  } catch (const std::logic_error&) {
    throw bad("non-numeric seq or t");
  }
  r.node = fields[2].second;
  auto kind = parse_trace_kind(fields[3].second);
  if (!kind) throw bad("unknown kind");
  r.kind = *kind;
  std::string prev;
  for (std::size_t i = 4; i < fields.size(); ++i) {
    if (i > 4 && fields[i].first <= prev) throw bad("detail keys not strictly ascending");
    prev = fields[i].first;
    r.detail.emplace(fields[i].first, fields[i].second);
  }
  return r;
}

inline std::vector<TraceRecord> parse_trace(std::string_view text) {
  std::vector<TraceRecord> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    if (!line.empty()) out.push_back(parse_line(line));
    pos = end + 1;
  }
  return out;
}

/// Append-only trace with a strictly increasing sequence number.
class Trace {
 public:
  const TraceRecord& append(Seconds t, std::string node, TraceKind kind, Detail detail = {}) {
    records_.push_back({next_seq_++, t, std::move(node), kind, std::move(detail)});
    return records_.back();
  }

  const std::vector<TraceRecord>& records() const noexcept { return records_; }
  std::vector<TraceRecord> release() && { return std::move(records_); }

 private:
  std::vector<TraceRecord> records_;
  std::uint64_t next_seq_ = 0;
};

}  // namespace ruralsense::sim
