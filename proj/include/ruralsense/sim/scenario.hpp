#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ruralsense/ids.hpp"
#include "ruralsense/network/network_model.hpp"
#include "ruralsense/protocol/types.hpp"
#include "ruralsense/server/server_node.hpp"

namespace ruralsense::sim {

enum class LoadErrc { Syntax, Schema, UnknownId, DuplicateId, OverlappingVisits, CaseMismatch, NegativeDuration };

constexpr std::string_view to_string(LoadErrc c) noexcept {
  switch (c) {
    case LoadErrc::Syntax: return "Syntax";
    case LoadErrc::Schema: return "Schema";
    case LoadErrc::UnknownId: return "UnknownId";
    case LoadErrc::DuplicateId: return "DuplicateId";
    case LoadErrc::OverlappingVisits: return "OverlappingVisits";
    case LoadErrc::CaseMismatch: return "CaseMismatch";
    case LoadErrc::NegativeDuration: return "NegativeDuration";
  }
  return "?";
}

/// Scenario rejected by the loader. `field` is a JSON-pointer-like path to the offending value.
class LoadError : public std::runtime_error {
 public:
  LoadError(LoadErrc code, std::string field, const std::string& msg)
      : std::runtime_error(std::string(to_string(code)) + " at " + field + ": " + msg),
        code_(code),
        field_(std::move(field)) {}

  LoadErrc code() const noexcept { return code_; }
  const std::string& field() const noexcept { return field_; }

 private:
  LoadErrc code_;
  std::string field_;
};

struct DeviceSpec {
  DeviceId id;
  net::SignalSchedule signal;
  std::optional<net::SmsSchedule> sms;
};

struct UserSpec {
  UserId uid;
  DeviceId device;  // handset used to log in; differs from uid on a shared smartphone
  std::string credentials;
};

struct RelaySpec {
  RelayId id;
  net::SignalSchedule signal;
  std::vector<net::Visit> visits;
  std::optional<std::uint32_t> capacity;
};

struct WorkloadItem {
  UserId uid;
  Seconds create_time = 0;
  protocol::PayloadDescriptor payload;
};

struct AlertItem {
  Seconds time = 0;
  server::AlertTargets targets;
  std::string body;
};

struct Scenario {
  std::optional<char> case_label;
  std::uint64_t seed = 0;
  Seconds horizon = 0;
  protocol::TimerConfig timers;
  net::LinkModel link;
  server::ExpertStub expert;
  std::vector<DeviceSpec> devices;
  std::vector<UserSpec> users;
  std::vector<RelaySpec> relays;
  std::vector<WorkloadItem> workload;
  std::vector<AlertItem> alerts;

  const UserSpec* user(const UserId& uid) const {
    for (const auto& u : users) {
      if (u.uid == uid) return &u;
    }
    return nullptr;
  }
};

namespace detail {

using nlohmann::json;

inline bool valid_id(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' || c == '-' ||
           c == '+' || c == '.' || c == ':';
  });
}

class Reader {
 public:
  [[noreturn]] static void fail(LoadErrc c, const std::string& path, const std::string& msg) {
    throw LoadError(c, path, msg);
  }

  static const json& field(const json& obj, const char* key, const std::string& path) {
    if (!obj.is_object() || !obj.contains(key)) fail(LoadErrc::Schema, path + "/" + key, "missing field");
    return obj.at(key);
  }

  static std::int64_t integer(const json& v, const std::string& path) {
    if (!v.is_number_integer()) fail(LoadErrc::Schema, path, "expected integer");
    return v.get<std::int64_t>();
  }

  static std::int64_t integer_or(const json& obj, const char* key, std::int64_t dflt, const std::string& path) {
    if (!obj.is_object() || !obj.contains(key)) return dflt;
    return integer(obj.at(key), path + "/" + key);
  }

  static std::string string(const json& v, const std::string& path) {
    if (!v.is_string()) fail(LoadErrc::Schema, path, "expected string");
    return v.get<std::string>();
  }

  static std::string id(const json& v, const std::string& path) {
    auto s = string(v, path);
    if (!valid_id(s)) fail(LoadErrc::Schema, path, "identifier must match [A-Za-z0-9_+.:-]+");
    return s;
  }

  static const json& array(const json& v, const std::string& path) {
    if (!v.is_array()) fail(LoadErrc::Schema, path, "expected array");
    return v;
  }

  static net::SignalLevel level(const json& v, const std::string& path) {
    auto lvl = net::parse_signal(string(v, path));
    if (!lvl) fail(LoadErrc::Schema, path, "signal level must be None, Poor or Good");
    return *lvl;
  }

  static net::SignalSchedule signal(const json& v, const std::string& path, Seconds horizon) {
    if (v.is_string()) return net::SignalSchedule(level(v, path));
    if (v.is_object() && v.contains("alternate")) {
      const auto& a = v.at("alternate");
      const auto p = path + "/alternate";
      const auto first = level(field(a, "first", p), p + "/first");
      const auto second = level(field(a, "second", p), p + "/second");
      const Seconds dwell = integer(field(a, "dwell", p), p + "/dwell");
      const Seconds dwell2 = integer_or(a, "dwell_second", dwell, p);
      if (dwell <= 0 || dwell2 <= 0) fail(LoadErrc::NegativeDuration, p + "/dwell", "dwell must be > 0");
      return net::alternating_signal(first, second, dwell, dwell2, horizon);
    }
    std::vector<net::SignalSchedule::Breakpoint> pts;
    const auto& arr = array(v, path);
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto p = path + "/" + std::to_string(i);
      if (!arr[i].is_array() || arr[i].size() != 2) fail(LoadErrc::Schema, p, "breakpoint must be [time, level]");
      pts.push_back({integer(arr[i][0], p + "/0"), level(arr[i][1], p + "/1")});
    }
    net::SignalSchedule sched(std::move(pts));
    if (auto err = sched.check(); !err.empty()) fail(LoadErrc::Schema, path, err);
    return sched;
  }

  static net::SmsSchedule sms(const json& v, const std::string& path) {
    if (v.is_boolean()) return net::SmsSchedule(v.get<bool>());
    std::vector<net::SmsSchedule::Breakpoint> pts;
    const auto& arr = array(v, path);
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto p = path + "/" + std::to_string(i);
      if (!arr[i].is_array() || arr[i].size() != 2 || !arr[i][1].is_boolean()) {
        fail(LoadErrc::Schema, p, "breakpoint must be [time, bool]");
      }
      pts.push_back({integer(arr[i][0], p + "/0"), arr[i][1].get<bool>()});
    }
    net::SmsSchedule sched(std::move(pts));
    if (auto err = sched.check(); !err.empty()) fail(LoadErrc::Schema, path, err);
    return sched;
  }

  static std::pair<Seconds, Seconds> range(const json& v, const std::string& path) {
    if (!v.is_array() || v.size() != 2) fail(LoadErrc::Schema, path, "expected [min, max]");
    const Seconds lo = integer(v[0], path + "/0");
    const Seconds hi = integer(v[1], path + "/1");
    if (lo < 0 || hi < lo) fail(LoadErrc::NegativeDuration, path, "need 0 <= min <= max");
    return {lo, hi};
  }
};

inline void check_case(const Scenario& sc, const net::Network& net) {
  const char label = *sc.case_label;
  const Seconds h = sc.horizon;
  auto is = [](net::SignalLevel want) { return [want](net::SignalLevel l) { return l == want; }; };
  auto not_good = [](net::SignalLevel l) { return l != net::SignalLevel::Good; };
  auto mismatch = [&](const std::string& where, const std::string& why) {
    throw LoadError(LoadErrc::CaseMismatch, where, std::string("case ") + label + ": " + why);
  };

  for (std::size_t i = 0; i < sc.devices.size(); ++i) {
    const auto& sig = sc.devices[i].signal;
    const auto where = "/devices/" + std::to_string(i) + "/signal";
    switch (label) {
      case 'A':
      case 'D':
        if (!sig.holds_over(0, h, is(net::SignalLevel::None))) mismatch(where, "farmer signal must stay None");
        break;
      case 'B':
        if (!sig.holds_over(0, h, is(net::SignalLevel::Poor))) mismatch(where, "farmer signal must stay Poor");
        break;
      case 'C':
        if (sig.at(0) != net::SignalLevel::None || !sig.ever(0, h, is(net::SignalLevel::Good))) {
          mismatch(where, "farmer must start in None and later reach Good");
        }
        break;
      default: break;
    }
  }

  if (label == 'C') return;
  for (std::size_t i = 0; i < sc.relays.size(); ++i) {
    const auto& r = sc.relays[i];
    const auto where = "/relays/" + std::to_string(i);
    for (const auto& v : net.visits(r.id)) {
      if (v.arrive >= h) break;
      const Seconds end = std::min(v.depart, h);
      if (label == 'A' && !r.signal.holds_over(v.arrive, end, is(net::SignalLevel::Good))) {
        mismatch(where + "/signal", "relay server link must be Good during every visit");
      }
      if ((label == 'B' || label == 'D') && !r.signal.holds_over(v.arrive, end, not_good)) {
        mismatch(where + "/signal", "relay must be offline while visiting farmers");
      }
    }
    if ((label == 'B' || label == 'D') && !r.signal.ever(0, h, is(net::SignalLevel::Good))) {
      mismatch(where + "/signal", "relay never reaches a network zone");
    }
  }
}

}  // namespace detail

/// Builds the environment described by a loaded scenario.
inline net::Network build_network(const Scenario& sc) {
  net::Network net(sc.link);
  for (const auto& d : sc.devices) net.add_device(d.id, d.signal, d.sms);
  for (const auto& r : sc.relays) net.add_relay(r.id, r.signal, r.visits, r.capacity);
  return net;
}

/// Validates and expands a scenario document. `seed_override` replaces the file's seed
/// before any stochastic generator runs.
inline Scenario load_scenario(const nlohmann::json& doc, std::optional<std::uint64_t> seed_override = std::nullopt) {
  using detail::Reader;
  using LE = LoadErrc;
  if (!doc.is_object()) Reader::fail(LE::Schema, "", "scenario must be an object");

  Scenario sc;
  if (doc.contains("case")) {
    const auto c = Reader::string(doc.at("case"), "/case");
    if (c.size() != 1 || c[0] < 'A' || c[0] > 'D') Reader::fail(LE::Schema, "/case", "case must be A, B, C or D");
    sc.case_label = c[0];
  }
  if (doc.contains("seed")) {
    if (!doc.at("seed").is_number_unsigned()) Reader::fail(LE::Schema, "/seed", "seed must be a non-negative integer");
    sc.seed = doc.at("seed").get<std::uint64_t>();
  }
  if (seed_override) sc.seed = *seed_override;

  if (doc.contains("timers")) {
    const auto& t = doc.at("timers");
    if (!t.is_object()) Reader::fail(LE::Schema, "/timers", "expected object");
    sc.timers.t_r = Reader::integer_or(t, "t_r", sc.timers.t_r, "/timers");
    sc.timers.t_d = Reader::integer_or(t, "t_d", sc.timers.t_d, "/timers");
    sc.timers.scan_period = Reader::integer_or(t, "scan_period", sc.timers.scan_period, "/timers");
    if (t.contains("max_retries") && !t.at("max_retries").is_null()) {
      const auto m = Reader::integer(t.at("max_retries"), "/timers/max_retries");
      if (m < 0) Reader::fail(LE::NegativeDuration, "/timers/max_retries", "must be >= 0");
      sc.timers.max_retries = static_cast<std::uint32_t>(m);
    }
  }
  if (sc.timers.t_r <= 0) Reader::fail(LE::NegativeDuration, "/timers/t_r", "t_r must be > 0");
  if (sc.timers.t_d <= 0) Reader::fail(LE::NegativeDuration, "/timers/t_d", "t_d must be > 0");
  if (sc.timers.t_d >= sc.timers.t_r) Reader::fail(LE::NegativeDuration, "/timers/t_d", "t_d must be < t_r");
  if (sc.timers.scan_period <= 0) Reader::fail(LE::NegativeDuration, "/timers/scan_period", "must be > 0");

  sc.horizon = Reader::integer_or(doc, "horizon", 2 * sc.timers.t_r, "");
  if (sc.horizon <= 0) Reader::fail(LE::NegativeDuration, "/horizon", "horizon must be > 0");

  if (doc.contains("link")) {
    const auto& l = doc.at("link");
    const auto d2d = Reader::integer_or(l, "d2d_bytes_per_second", static_cast<std::int64_t>(sc.link.d2d_bytes_per_second), "/link");
    const auto srv = Reader::integer_or(l, "server_bytes_per_second", static_cast<std::int64_t>(sc.link.server_bytes_per_second), "/link");
    const auto cap = Reader::integer_or(l, "capacity", sc.link.capacity, "/link");
    if (d2d <= 0 || srv <= 0) Reader::fail(LE::NegativeDuration, "/link", "rates must be > 0");
    if (cap < 1) Reader::fail(LE::Schema, "/link/capacity", "capacity must be >= 1");
    sc.link = {static_cast<std::uint64_t>(d2d), static_cast<std::uint64_t>(srv), static_cast<std::uint32_t>(cap)};
  }

  sc.expert = server::ExpertStub::fixed(1800, sc.seed);
  if (doc.contains("expert")) {
    const auto& lat = Reader::field(doc.at("expert"), "latency", "/expert");
    if (lat.is_number_integer()) {
      const auto v = lat.get<std::int64_t>();
      if (v < 0) Reader::fail(LE::NegativeDuration, "/expert/latency", "latency must be >= 0");
      sc.expert = server::ExpertStub::fixed(v, sc.seed);
    } else {
      auto [lo, hi] = Reader::range(Reader::field(lat, "uniform", "/expert/latency"), "/expert/latency/uniform");
      sc.expert = server::ExpertStub::uniform(lo, hi, sc.seed);
    }
  }

  std::set<std::string> node_ids{std::string(kServerId)};
  auto claim = [&](const std::string& id, const std::string& path) {
    if (!node_ids.insert(id).second) Reader::fail(LE::DuplicateId, path, "duplicate node id " + id);
  };

  const auto& devices = Reader::array(Reader::field(doc, "devices", ""), "/devices");
  std::set<DeviceId> device_ids;
  for (std::size_t i = 0; i < devices.size(); ++i) {
    const auto p = "/devices/" + std::to_string(i);
    DeviceSpec d;
    d.id = DeviceId(Reader::id(Reader::field(devices[i], "id", p), p + "/id"));
    claim(d.id.str(), p + "/id");
    d.signal = Reader::signal(Reader::field(devices[i], "signal", p), p + "/signal", sc.horizon);
    if (devices[i].contains("sms")) d.sms = Reader::sms(devices[i].at("sms"), p + "/sms");
    device_ids.insert(d.id);
    sc.devices.push_back(std::move(d));
  }

  const auto& users = Reader::array(Reader::field(doc, "users", ""), "/users");
  std::set<UserId> uids;
  for (std::size_t i = 0; i < users.size(); ++i) {
    const auto p = "/users/" + std::to_string(i);
    UserSpec u;
    u.uid = UserId(Reader::id(Reader::field(users[i], "uid", p), p + "/uid"));
    if (!uids.insert(u.uid).second) Reader::fail(LE::DuplicateId, p + "/uid", "duplicate uid " + u.uid.str());
    u.device = DeviceId(Reader::id(Reader::field(users[i], "device", p), p + "/device"));
    if (!device_ids.count(u.device)) Reader::fail(LE::UnknownId, p + "/device", "unknown device " + u.device.str());
    u.credentials = users[i].contains("credentials") ? Reader::string(users[i].at("credentials"), p + "/credentials")
                                                      : "pin:" + u.uid.str();
    sc.users.push_back(std::move(u));
  }

  auto read_cluster = [&](const nlohmann::json& v, const std::string& path) {
    std::set<DeviceId> cluster;
    const auto& arr = Reader::array(v, path);
    for (std::size_t k = 0; k < arr.size(); ++k) {
      DeviceId d(Reader::id(arr[k], path + "/" + std::to_string(k)));
      if (!device_ids.count(d)) Reader::fail(LE::UnknownId, path + "/" + std::to_string(k), "unknown device " + d.str());
      cluster.insert(std::move(d));
    }
    return cluster;
  };

  const auto relays = doc.contains("relays") ? Reader::array(doc.at("relays"), "/relays") : nlohmann::json::array();
  for (std::size_t i = 0; i < relays.size(); ++i) {
    const auto p = "/relays/" + std::to_string(i);
    const auto& rj = relays[i];
    RelaySpec r;
    r.id = RelayId(Reader::id(Reader::field(rj, "id", p), p + "/id"));
    claim(r.id.str(), p + "/id");
    r.signal = Reader::signal(Reader::field(rj, "signal", p), p + "/signal", sc.horizon);
    if (rj.contains("capacity")) {
      const auto cap = Reader::integer(rj.at("capacity"), p + "/capacity");
      if (cap < 1) Reader::fail(LE::Schema, p + "/capacity", "capacity must be >= 1");
      r.capacity = static_cast<std::uint32_t>(cap);
    }
    if (rj.contains("visits")) {
      const auto& vs = Reader::array(rj.at("visits"), p + "/visits");
      for (std::size_t k = 0; k < vs.size(); ++k) {
        const auto vp = p + "/visits/" + std::to_string(k);
        net::Visit v;
        v.cluster = read_cluster(Reader::field(vs[k], "cluster", vp), vp + "/cluster");
        v.arrive = Reader::integer(Reader::field(vs[k], "arrive", vp), vp + "/arrive");
        v.depart = Reader::integer(Reader::field(vs[k], "depart", vp), vp + "/depart");
        if (v.arrive < 0) Reader::fail(LE::NegativeDuration, vp + "/arrive", "arrive must be >= 0");
        if (v.arrive >= v.depart) Reader::fail(LE::OverlappingVisits, vp, "visit needs arrive < depart");
        r.visits.push_back(std::move(v));
      }
    }
    if (rj.contains("periodic")) {
      const auto& g = rj.at("periodic");
      const auto gp = p + "/periodic";
      auto cluster = read_cluster(Reader::field(g, "cluster", gp), gp + "/cluster");
      const Seconds every = Reader::integer(Reader::field(g, "every", gp), gp + "/every");
      const Seconds dwell = Reader::integer(Reader::field(g, "dwell", gp), gp + "/dwell");
      const Seconds first = Reader::integer_or(g, "first", every, gp);
      const Seconds until = Reader::integer_or(g, "until", sc.horizon, gp);
      if (every <= 0 || dwell <= 0 || first < 0) Reader::fail(LE::NegativeDuration, gp, "every, dwell must be > 0");
      for (auto& v : net::periodic_visits(cluster, first, every, dwell, until)) r.visits.push_back(std::move(v));
    }
    if (rj.contains("random")) {
      const auto& g = rj.at("random");
      const auto gp = p + "/random";
      auto cluster = read_cluster(Reader::field(g, "cluster", gp), gp + "/cluster");
      const Seconds start = Reader::integer_or(g, "start", 0, gp);
      const Seconds until = Reader::integer_or(g, "until", sc.horizon, gp);
      auto gap = Reader::range(Reader::field(g, "gap", gp), gp + "/gap");
      auto dwell = Reader::range(Reader::field(g, "dwell", gp), gp + "/dwell");
      const auto seed = server::detail::splitmix64(sc.seed ^ server::detail::fnv1a(r.id.str()));
      for (auto& v : net::random_visits(cluster, start, until, gap, dwell, seed)) r.visits.push_back(std::move(v));
    }
    std::sort(r.visits.begin(), r.visits.end(),
              [](const net::Visit& a, const net::Visit& b) { return a.arrive < b.arrive; });
    for (std::size_t k = 1; k < r.visits.size(); ++k) {
      if (r.visits[k].arrive < r.visits[k - 1].depart) {
        Reader::fail(LE::OverlappingVisits, p, "visits at " + std::to_string(r.visits[k - 1].arrive) + " and " +
                                                   std::to_string(r.visits[k].arrive) + " overlap");
      }
    }
    sc.relays.push_back(std::move(r));
  }

  const auto workload = doc.contains("workload") ? Reader::array(doc.at("workload"), "/workload") : nlohmann::json::array();
  for (std::size_t i = 0; i < workload.size(); ++i) {
    const auto p = "/workload/" + std::to_string(i);
    const auto& wj = workload[i];
    WorkloadItem w;
    w.uid = UserId(Reader::id(Reader::field(wj, "uid", p), p + "/uid"));
    if (!uids.count(w.uid)) Reader::fail(LE::UnknownId, p + "/uid", "unknown uid " + w.uid.str());
    w.create_time = Reader::integer(Reader::field(wj, "create_time", p), p + "/create_time");
    if (w.create_time < 0) Reader::fail(LE::NegativeDuration, p + "/create_time", "must be >= 0");
    if (w.create_time >= sc.horizon) Reader::fail(LE::Schema, p + "/create_time", "must be < horizon");
    const auto& pj = Reader::field(wj, "payload", p);
    const auto pp = p + "/payload";
    const auto photo = Reader::integer_or(pj, "photo_bytes", 0, pp);
    const auto voice = Reader::integer_or(pj, "voice_bytes", 0, pp);
    if (photo < 0 || voice < 0) Reader::fail(LE::Schema, pp, "payload sizes must be >= 0");
    if (photo + voice == 0) Reader::fail(LE::Schema, pp, "payload must carry at least one byte");
    w.payload.photo_bytes = static_cast<std::uint64_t>(photo);
    w.payload.voice_bytes = static_cast<std::uint64_t>(voice);
    if (pj.contains("labels")) {
      for (const auto& l : Reader::array(pj.at("labels"), pp + "/labels")) {
        w.payload.labels.push_back(Reader::string(l, pp + "/labels"));
      }
    }
    if (pj.contains("geotag")) {
      const auto& g = pj.at("geotag");
      if (!g.is_array() || g.size() != 2 || !g[0].is_number() || !g[1].is_number()) {
        Reader::fail(LE::Schema, pp + "/geotag", "expected [lat, lon]");
      }
      w.payload.geotag = {g[0].get<double>(), g[1].get<double>()};
    }
    sc.workload.push_back(std::move(w));
  }
  std::stable_sort(sc.workload.begin(), sc.workload.end(),
                   [](const WorkloadItem& a, const WorkloadItem& b) { return a.create_time < b.create_time; });

  const auto alerts = doc.contains("alerts") ? Reader::array(doc.at("alerts"), "/alerts") : nlohmann::json::array();
  for (std::size_t i = 0; i < alerts.size(); ++i) {
    const auto p = "/alerts/" + std::to_string(i);
    AlertItem a;
    a.time = Reader::integer(Reader::field(alerts[i], "time", p), p + "/time");
    if (a.time < 0) Reader::fail(LE::NegativeDuration, p + "/time", "must be >= 0");
    a.body = Reader::string(Reader::field(alerts[i], "body", p), p + "/body");
    const auto& t = Reader::field(alerts[i], "targets", p);
    if (t.is_string()) {
      if (t.get<std::string>() != "all") Reader::fail(LE::Schema, p + "/targets", "expected \"all\" or a uid list");
    } else {
      std::set<UserId> targets;
      for (const auto& u : Reader::array(t, p + "/targets")) {
        UserId uid(Reader::id(u, p + "/targets"));
        if (!uids.count(uid)) Reader::fail(LE::UnknownId, p + "/targets", "unknown uid " + uid.str());
        targets.insert(std::move(uid));
      }
      a.targets = std::move(targets);
    }
    sc.alerts.push_back(std::move(a));
  }

  if (sc.case_label) detail::check_case(sc, build_network(sc));
  return sc;
}

inline nlohmann::json parse_scenario_json(std::string_view text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw LoadError(LoadErrc::Syntax, "", e.what());
  }
}

/// Parses JSON text; syntax errors surface as LoadErrc::Syntax.
inline Scenario parse_scenario(std::string_view text, std::optional<std::uint64_t> seed_override = std::nullopt) {
  return load_scenario(parse_scenario_json(text), seed_override);
}

}  // namespace ruralsense::sim
