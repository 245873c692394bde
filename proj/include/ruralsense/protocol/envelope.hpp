#pragma once

#include <optional>
#include <string_view>

#include "ruralsense/protocol/types.hpp"

namespace ruralsense::protocol {

enum class ValidationError { QueryOverSms, MissingEidOnAck, EmptyHops, MissingQueryBody };

constexpr std::string_view to_string(ValidationError e) noexcept {
  switch (e) {
    case ValidationError::QueryOverSms: return "QueryOverSms";
    case ValidationError::MissingEidOnAck: return "MissingEidOnAck";
    case ValidationError::EmptyHops: return "EmptyHops";
    case ValidationError::MissingQueryBody: return "MissingQueryBody";
  }
  return "?";
}

/// Returns the first violated envelope invariant, or nullopt when the envelope is well formed.
/// MissingEidOnAck covers both Ack and Response.
inline std::optional<ValidationError> validate_envelope(const Envelope& env) {
  if (env.hops.empty()) return ValidationError::EmptyHops;
  switch (env.kind) {
    case EnvelopeKind::Query:
      if (env.channel == Channel::SMS) return ValidationError::QueryOverSms;
      if (!env.query) return ValidationError::MissingQueryBody;
      break;
    case EnvelopeKind::Ack:
    case EnvelopeKind::Response:
      if (!env.eid) return ValidationError::MissingEidOnAck;
      break;
    case EnvelopeKind::Alert:
      break;
  }
  return std::nullopt;
}

}  // namespace ruralsense::protocol
