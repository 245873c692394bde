#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>

namespace ruralsense {

/// Simulated wall clock, in whole seconds since scenario start.
using Seconds = std::int64_t;

/// Per-user event counter value. Only unique together with a UserId.
using EventId = std::uint64_t;

/// String identifier that cannot be mixed up with identifiers of another role.
template <class Tag>
class StrongId {
 public:
  StrongId() = default;
  explicit StrongId(std::string value) : value_(std::move(value)) {}

  const std::string& str() const noexcept { return value_; }
  bool empty() const noexcept { return value_.empty(); }

  friend bool operator==(const StrongId&, const StrongId&) = default;
  friend auto operator<=>(const StrongId&, const StrongId&) = default;

  friend std::ostream& operator<<(std::ostream& os, const StrongId& id) {
    return os << id.value_;
  }

 private:
  std::string value_;
};

/// Physical identity of a farmer: their own phone number.
using UserId = StrongId<struct UserIdTag>;
/// Logical identity: the phone number of the handset used to log in.
using DeviceId = StrongId<struct DeviceIdTag>;
using RelayId = StrongId<struct RelayIdTag>;

inline constexpr std::string_view kServerId = "server";

/// End-to-end key of a query.
struct EventKey {
  UserId uid;
  EventId eid = 0;

  friend bool operator==(const EventKey&, const EventKey&) = default;
  friend auto operator<=>(const EventKey&, const EventKey&) = default;
};

/// (uid, device) pair as registered on a relay hotspot.
struct Registration {
  UserId uid;
  DeviceId device;

  friend bool operator==(const Registration&, const Registration&) = default;
  friend auto operator<=>(const Registration&, const Registration&) = default;
};

}  // namespace ruralsense

template <class Tag>
struct std::hash<ruralsense::StrongId<Tag>> {
  std::size_t operator()(const ruralsense::StrongId<Tag>& id) const noexcept {
    return std::hash<std::string>{}(id.str());
  }
};
