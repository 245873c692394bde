#pragma once

#include "ruralsense/ids.hpp"

namespace ruralsense::relay {

/// Opaque registration token issued by a relay hotspot. One per (relay, uid, device).
struct AuthToken {
  RelayId relay;
  UserId uid;
  DeviceId device;
  Seconds issued_at = 0;

  friend bool operator==(const AuthToken&, const AuthToken&) = default;
};

}  // namespace ruralsense::relay
