#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace ruralsense {

enum class Errc {
  TimeReversal,
  InvalidState,
  NoActiveSession,
  EmptyPayload,
  DeviceBusy,
  BadSignal,
  NoContact,
  NotRegistered,
  RelayFull,
  AlreadyOpen,
  HotspotClosed,
  BadCredentials,
  InvalidToken,
  MalformedQuery,
  MalformedEnvelope,
  UnknownRecord,
  UnknownNode,
  MalformedTrace,
};

constexpr std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::TimeReversal: return "TimeReversal";
    case Errc::InvalidState: return "InvalidState";
    case Errc::NoActiveSession: return "NoActiveSession";
    case Errc::EmptyPayload: return "EmptyPayload";
    case Errc::DeviceBusy: return "DeviceBusy";
    case Errc::BadSignal: return "BadSignal";
    case Errc::NoContact: return "NoContact";
    case Errc::NotRegistered: return "NotRegistered";
    case Errc::RelayFull: return "RelayFull";
    case Errc::AlreadyOpen: return "AlreadyOpen";
    case Errc::HotspotClosed: return "HotspotClosed";
    case Errc::BadCredentials: return "BadCredentials";
    case Errc::InvalidToken: return "InvalidToken";
    case Errc::MalformedQuery: return "MalformedQuery";
    case Errc::MalformedEnvelope: return "MalformedEnvelope";
    case Errc::UnknownRecord: return "UnknownRecord";
    case Errc::UnknownNode: return "UnknownNode";
    case Errc::MalformedTrace: return "MalformedTrace";
  }
  return "Unknown";
}

/// Raised when an operation's precondition is violated by the caller.
class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(Errc code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace ruralsense
