#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "ruralsense/farmer/farmer_node.hpp"
#include "ruralsense/network/network_model.hpp"
#include "ruralsense/relay/relay_node.hpp"
#include "ruralsense/server/server_node.hpp"
#include "ruralsense/sim/metrics.hpp"
#include "ruralsense/sim/scenario.hpp"
#include "ruralsense/sim/trace.hpp"

namespace ruralsense::sim {

/// Same-instant ordering: network changes, then timers, then message arrivals, then node actions.
enum class Priority : int { Network = 0, Timer = 1, Arrival = 2, Action = 3 };

struct RunResult {
  std::vector<TraceRecord> trace;
  Metrics metrics;                      // computed from final node state
  std::vector<std::string> violations;  // audit and conservation failures; empty when sound
};

namespace detail {

template <class Range>
std::string join_ids(const Range& ids) {
  std::string out;
  for (const auto& id : ids) {
    if (!out.empty()) out += ',';
    out += id.str();
  }
  return out;
}

inline Detail key_detail(const EventKey& key) { return {{"uid", key.uid.str()}, {"eid", std::to_string(key.eid)}}; }

}  // namespace detail

/// Single-threaded deterministic executor for one scenario. Events run in
/// (time, priority, insertion sequence) order; a Simulation runs once.
class Simulation {
 public:
  explicit Simulation(Scenario scenario)
      : sc_(std::move(scenario)), network_(build_network(sc_)), server_(network_, sc_.expert, directory(sc_)) {
    for (const auto& d : sc_.devices) farmers_.emplace(d.id, farmer::FarmerNode(d.id, sc_.timers));
    for (const auto& u : sc_.users) farmers_.at(u.device).add_resident(u.uid);
    for (const auto& r : sc_.relays) {
      auto [it, ok] = relays_.emplace(r.id, relay::RelayNode(r.id));
      it->second.open_hotspot(network_.capacity(r.id));
    }
  }

  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  RunResult run(std::optional<Seconds> until = std::nullopt) {
    if (ran_) throw std::logic_error("Simulation::run called twice");
    ran_ = true;
    horizon_ = until.value_or(sc_.horizon);
    seed_events();
    while (!queue_.empty() && queue_.top().t < horizon_) {
      Event ev = queue_.top();
      queue_.pop();
      now_ = ev.t;
      ev.fn();
    }

    RunResult out;
    out.trace = trace_.records();
    out.metrics = state_metrics();
    out.violations = audit_trace(out.trace);
    const auto& m = out.metrics;
    if (m.responses_delivered_in_time + m.discards + m.in_flight_at_horizon != m.queries_created) {
      out.violations.push_back("conservation: responses + discards + in_flight != created");
    }
    if (m.delivered_to_server + m.never_delivered != m.queries_created) {
      out.violations.push_back("conservation: delivered + never_delivered != created");
    }
    const Metrics from_trace = collect_metrics(out.trace);
    if (!(from_trace == m)) {
      out.violations.push_back("metrics mismatch: trace {" + format_metrics_line(from_trace) + "} state {" +
                               format_metrics_line(m) + "}");
    }
    return out;
  }

  const Scenario& scenario() const noexcept { return sc_; }
  const net::Network& network() const noexcept { return network_; }
  const server::ServerNode& server() const noexcept { return server_; }
  const farmer::FarmerNode& farmer(const DeviceId& d) const { return farmers_.at(d); }
  farmer::FarmerNode& farmer(const DeviceId& d) { return farmers_.at(d); }
  const relay::RelayNode& relay(const RelayId& r) const { return relays_.at(r); }
  const std::map<DeviceId, farmer::FarmerNode>& farmers() const noexcept { return farmers_; }
  const std::map<RelayId, relay::RelayNode>& relays() const noexcept { return relays_; }

 private:
  struct Event {
    Seconds t = 0;
    Priority prio = Priority::Action;
    std::uint64_t seq = 0;
    std::function<void()> fn;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return std::tie(a.t, a.prio, a.seq) > std::tie(b.t, b.prio, b.seq);
    }
  };

  static std::map<UserId, DeviceId> directory(const Scenario& sc) {
    std::map<UserId, DeviceId> out;
    for (const auto& u : sc.users) out.emplace(u.uid, u.device);
    return out;
  }

  void schedule(Seconds t, Priority p, std::function<void()> fn) {
    queue_.push(Event{t, p, next_seq_++, std::move(fn)});
  }

  void record(std::string node, TraceKind kind, Detail detail = {}) {
    trace_.append(now_, std::move(node), kind, std::move(detail));
  }

  void seed_events() {
    for (const auto& d : sc_.devices) {
      for (const auto& b : d.signal.breakpoints()) {
        if (b.start < horizon_) schedule(b.start, Priority::Network, [this, id = d.id, l = b.level] { device_signal(id, l); });
      }
      if (d.sms) {
        for (const auto& b : d.sms->breakpoints()) {
          if (b.start < horizon_) schedule(b.start, Priority::Network, [this, id = d.id, l = b.level] { device_sms(id, l); });
        }
      }
    }
    for (const auto& r : sc_.relays) {
      for (const auto& b : r.signal.breakpoints()) {
        if (b.start < horizon_) schedule(b.start, Priority::Network, [this, id = r.id, l = b.level] { relay_signal(id, l); });
      }
      for (const auto& v : network_.visits(r.id)) {
        if (v.arrive >= horizon_) break;
        schedule(v.arrive, Priority::Network, [this, id = r.id, &v] { visit_arrive(id, v); });
        if (v.depart < horizon_) schedule(v.depart, Priority::Network, [this, id = r.id, &v] { visit_depart(id, v); });
      }
    }
    for (std::size_t i = 0; i < sc_.workload.size(); ++i) {
      schedule(sc_.workload[i].create_time, Priority::Action, [this, i] { create_event(i); });
    }
    for (std::size_t i = 0; i < sc_.alerts.size(); ++i) {
      schedule(sc_.alerts[i].time, Priority::Action, [this, i] { send_alert(i); });
    }
  }

  // --- network changes ---------------------------------------------------

  void device_signal(const DeviceId& d, net::SignalLevel level) {
    record(d.str(), TraceKind::NetworkChange, {{"change", "signal"}, {"level", std::string(net::to_string(level))}});
    server_.retry_parked(now_);
    drain_direct();
    if (!pending_scan_.count(d) && !farmers_.at(d).stored_local().empty()) {
      schedule(now_, Priority::Action, [this, d] { scan(d); });
    }
  }

  void device_sms(const DeviceId& d, bool reachable) {
    record(d.str(), TraceKind::NetworkChange, {{"change", "sms"}, {"reachable", reachable ? "1" : "0"}});
    server_.retry_parked(now_);
    drain_direct();
  }

  void relay_signal(const RelayId& r, net::SignalLevel level) {
    record(r.str(), TraceKind::NetworkChange, {{"change", "signal"}, {"level", std::string(net::to_string(level))}});
    if (level == net::SignalLevel::Good) schedule(now_, Priority::Action, [this, r] { relay_service(r); });
  }

  void visit_arrive(const RelayId& r, const net::Visit& v) {
    record(r.str(), TraceKind::NetworkChange, {{"change", "arrive"}, {"cluster", detail::join_ids(v.cluster)}});
    schedule(now_, Priority::Action, [this, r] { relay_service(r); });
    for (const auto& d : v.cluster) schedule(now_, Priority::Action, [this, d] { scan(d); });
  }

  void visit_depart(const RelayId& r, const net::Visit& v) {
    record(r.str(), TraceKind::NetworkChange, {{"change", "depart"}, {"cluster", detail::join_ids(v.cluster)}});
  }

  // --- relay side ----------------------------------------------------------

  void relay_service(const RelayId& r) {
    if (network_.relay_link(r, now_)) relay_sync(r);
    relay_deliver(r);
  }

  void relay_sync(const RelayId& r) {
    auto report = relays_.at(r).sync_with_server(true, now_, server_);
    for (const auto& u : report.uploads) note_ingest(r.str(), u.key, u.duplicate, u.response_at);
    drain_direct();
  }

  void relay_deliver(const RelayId& r) {
    for (auto& env : relays_.at(r).deliver_downstream(network_.devices_in_contact(r, now_), now_)) {
      deliver_to_farmer(env, r);
    }
  }

  void relay_accept(const RelayId& r, const relay::AuthToken& token, const protocol::QueryEvent& event,
                    const DeviceId& from) {
    relays_.at(r).accept_query(token, event, now_, network_.in_contact(r, from, now_));
    if (network_.relay_link(r, now_)) relay_sync(r);
    relay_deliver(r);
  }

  // --- server side ---------------------------------------------------------

  void note_ingest(const std::string& uploader, const EventKey& key, bool duplicate, std::optional<Seconds> response_at) {
    auto det = detail::key_detail(key);
    det["dup"] = duplicate ? "1" : "0";
    det["via"] = "CellularData";
    record(uploader, TraceKind::Upload, det);
    if (response_at) {
      auto sched = detail::key_detail(key);
      sched["at"] = std::to_string(*response_at);
      record(std::string(kServerId), TraceKind::ResponseScheduled, sched);
      schedule(*response_at, Priority::Timer, [this, key] { expert_ready(key); });
    }
  }

  void direct_ingest(const protocol::Envelope& env) {
    auto result = server_.ingest_query(env, now_);
    note_ingest(env.hops.front(), env.query->key(), result.duplicate, result.response_at);
    schedule(now_, Priority::Arrival, [this, ack = std::move(result.ack)] { deliver_to_farmer(ack, std::nullopt); });
  }

  void expert_ready(const EventKey& key) {
    server_.dispatch(server_.release_response(key, now_), now_);
    drain_direct();
    wake_online_relays();
  }

  void send_alert(std::size_t i) {
    const auto& a = sc_.alerts[i];
    server_.send_alert(a.targets, a.body, now_);
    drain_direct();
    wake_online_relays();
  }

  /// A relay with a live link and an open contact pulls queued traffic at once.
  void wake_online_relays() {
    for (const auto& [id, node] : relays_) {
      if (server_.outbox_size(id) > 0 && network_.relay_link(id, now_) && network_.visit_at(id, now_)) {
        schedule(now_, Priority::Action, [this, r = id] { relay_service(r); });
      }
    }
  }

  void drain_direct() {
    for (auto& env : server_.take_direct()) {
      schedule(now_, Priority::Arrival, [this, env = std::move(env)] { deliver_to_farmer(env, std::nullopt); });
    }
  }

  // --- farmer side ---------------------------------------------------------

  void deliver_to_farmer(const protocol::Envelope& env, const std::optional<RelayId>& via_relay) {
    auto& f = farmers_.at(env.target_device);
    const auto outcome = f.handle_downstream(env, now_);
    Detail det{{"uid", env.uid.str()}, {"via", std::string(protocol::to_string(env.channel))}};
    if (env.eid) det["eid"] = std::to_string(*env.eid);
    if (via_relay) det["relay"] = via_relay->str();
    using farmer::Disposition;
    switch (outcome.disposition) {
      case Disposition::AckApplied: record(f.device().str(), TraceKind::AckDelivered, det); break;
      case Disposition::ResponseApplied: record(f.device().str(), TraceKind::ResponseDelivered, det); break;
      case Disposition::AlertStored:
        det["alert"] = std::to_string(env.alert_id.value_or(0));
        det["recipients"] = std::to_string(outcome.alert_recipients.size());
        record(f.device().str(), TraceKind::AlertDelivered, det);
        break;
      case Disposition::AlertDuplicate: break;
      default:
        det["msg"] = std::string(protocol::to_string(env.kind));
        det["reason"] = std::string(farmer::to_string(outcome.disposition));
        record(f.device().str(), TraceKind::LateResponse, det);
        break;
    }
  }

  void create_event(std::size_t i) {
    const auto& w = sc_.workload[i];
    const auto& device = sc_.user(w.uid)->device;
    auto& f = farmers_.at(device);
    const auto session = f.login(w.uid, now_);
    const auto& rec = f.create_event(session, w.payload, now_);
    f.logout();
    auto det = detail::key_detail(rec.key());
    det["device"] = rec.event.logical_device.str();
    det["bytes"] = std::to_string(rec.event.payload.total_bytes());
    record(device.str(), TraceKind::EventCreated, det);
    schedule_timers(device);
    scan(device);
  }

  void schedule_timers(const DeviceId& d) {
    auto& done = scheduled_timers_[d];
    for (auto t : farmers_.at(d).pending_deadlines()) {
      if (t >= now_ && done.insert(t).second) schedule(t, Priority::Timer, [this, d] { farmer_timer(d); });
    }
  }

  void farmer_timer(const DeviceId& d) {
    auto& f = farmers_.at(d);
    bool retransmit = false;
    for (const auto& [key, action] : f.on_timer(now_)) {
      auto det = detail::key_detail(key);
      if (action == protocol::ProtocolAction::EmitRetransmit) {
        const auto& rec = f.record(key);
        det["retries"] = std::to_string(rec.retries);
        if (rec.last_relay) det["last_relay"] = rec.last_relay->str();
        record(d.str(), TraceKind::Retransmit, det);
        retransmit = true;
      } else if (action == protocol::ProtocolAction::EmitDiscard) {
        record(d.str(), TraceKind::Discard, det);
      }
    }
    if (retransmit) schedule(now_, Priority::Action, [this, d] { scan(d); });
  }

  void request_rescan(const DeviceId& d, Seconds at) {
    if (auto it = pending_scan_.find(d); it != pending_scan_.end() && it->second >= now_ && it->second <= at) return;
    pending_scan_[d] = at;
    schedule(at, Priority::Timer, [this, d, at] {
      auto it = pending_scan_.find(d);
      if (it == pending_scan_.end() || it->second != at) return;
      pending_scan_.erase(it);
      scan(d);
    });
  }

  void scan(const DeviceId& d) {
    auto& f = farmers_.at(d);
    const auto stored = f.stored_local();
    if (stored.empty()) return;
    const auto signal = network_.signal_at(d, now_);
    const auto contacts = network_.relays_in_contact(d, now_);
    const auto decision = farmer::scan_and_select(d, now_, signal, contacts, sc_.timers);

    Detail det{{"decision", std::string(farmer::decision_name(decision))},
               {"pending", std::to_string(stored.size())},
               {"signal", std::string(net::to_string(signal))}};

    if (std::holds_alternative<farmer::DirectNow>(decision)) {
      record(d.str(), TraceKind::Scan, det);
      for (const auto& key : stored) {
        auto [rec, env] = f.transmit_direct(key, now_, signal);
        if (!env) {
          if (rec.state == protocol::RecordState::Discarded) record(d.str(), TraceKind::Discard, detail::key_detail(key));
          continue;
        }
        schedule(now_, Priority::Arrival, [this, env = std::move(*env)] { direct_ingest(env); });
      }
    } else if (const auto* wait = std::get_if<farmer::WaitAndRescan>(&decision)) {
      det["next_scan"] = std::to_string(wait->next_scan);
      record(d.str(), TraceKind::Scan, det);
      request_rescan(d, wait->next_scan);
    } else if (std::holds_alternative<farmer::NoPath>(decision)) {
      record(d.str(), TraceKind::Scan, det);
    } else {
      std::map<RelayId, std::vector<EventKey>> groups;
      for (const auto& key : stored) groups[*farmer::select_relay(contacts, f.record(key).last_relay)].push_back(key);
      std::vector<RelayId> chosen;
      for (const auto& [r, keys] : groups) chosen.push_back(r);
      det["relay"] = detail::join_ids(chosen);
      record(d.str(), TraceKind::Scan, det);
      for (const auto& [r, keys] : groups) handoff_group(d, r, keys);
    }
    schedule_timers(d);
  }

  void handoff_group(const DeviceId& d, const RelayId& r, const std::vector<EventKey>& keys) {
    auto& f = farmers_.at(d);
    auto& rl = relays_.at(r);

    std::map<UserId, std::string> token_state;
    for (const auto& key : keys) {
      if (token_state.count(key.uid)) continue;
      if (f.token_for(r, key.uid)) {
        token_state[key.uid] = "cached";
        continue;
      }
      const auto* user = sc_.user(key.uid);
      try {
        auto reg = rl.register_farmer(key.uid, d, user ? user->credentials : std::string{}, true, now_);
        f.store_token(reg.token);
        token_state[key.uid] = reg.handshake ? "new" : "cached";
      } catch (const ProtocolError& e) {
        if (e.code() != Errc::BadCredentials) throw;
        record(d.str(), TraceKind::Rejected, {{"relay", r.str()}, {"reason", "BadCredentials"}, {"uid", key.uid.str()}});
        ++rejected_;
        return;
      }
    }

    const auto active = rl.active_sessions(now_);
    const auto admission = network_.admit(r, d, now_, active);
    if (admission == net::Admission::Rejected) {
      ++rejected_;
      record(d.str(), TraceKind::Rejected,
             {{"active", std::to_string(active)},
              {"capacity", std::to_string(rl.capacity())},
              {"pending", std::to_string(keys.size())},
              {"reason", "RelayFull"},
              {"relay", r.str()}});
      request_rescan(d, now_ + sc_.timers.scan_period);
      return;
    }

    std::uint64_t bytes = 0;
    for (const auto& key : keys) bytes += f.record(key).event.payload.total_bytes();
    const Seconds duration = net::transfer_time(bytes, network_.link().d2d_bytes_per_second);
    rl.open_session(d, now_, now_ + duration);

    const farmer::D2DLink link{true, admission, network_.link().d2d_bytes_per_second};
    for (const auto& key : keys) {
      const auto token = f.token_for(r, key.uid);
      auto [rec, xfer] = f.handoff_to_relay(key, r, token, now_, link);
      if (!xfer) {
        if (rec.state == protocol::RecordState::Discarded) record(d.str(), TraceKind::Discard, detail::key_detail(key));
        continue;
      }
      auto det = detail::key_detail(key);
      det["relay"] = r.str();
      det["sessions"] = std::to_string(active + 1);
      det["capacity"] = std::to_string(rl.capacity());
      det["transfer_s"] = std::to_string(duration);
      det["token"] = token_state.at(key.uid);
      det["attempt"] = std::to_string(rec.retries + 1);
      record(d.str(), TraceKind::Handoff, det);
      schedule(now_, Priority::Arrival,
               [this, r, tok = *token, ev = std::move(xfer->event), d] { relay_accept(r, tok, ev, d); });
    }
  }

  Metrics state_metrics() const {
    Metrics m;
    std::vector<Seconds> ack_lat, resp_lat;
    for (const auto& [d, f] : farmers_) {
      const auto& st = f.stats();
      for (const auto& [key, rec] : f.records()) {
        ++m.queries_created;
        m.retransmissions += rec.retries;
        switch (rec.state) {
          case protocol::RecordState::Completed: ++m.responses_delivered_in_time; break;
          case protocol::RecordState::Discarded: ++m.discards; break;
          default: ++m.in_flight_at_horizon; break;
        }
        if (auto it = st.acked_at.find(key); it != st.acked_at.end()) ack_lat.push_back(it->second - rec.event.created_at);
        if (auto it = st.completed_at.find(key); it != st.completed_at.end()) {
          resp_lat.push_back(it->second - rec.event.created_at);
        }
      }
      m.acks_received += st.acks_received;
      m.late_responses += st.late_responses;
      m.duplicates_suppressed += st.duplicate_copies;
      m.alerts_delivered += st.alerts_stored;
    }
    m.delivered_to_server = server_.ledger().size();
    m.never_delivered = m.queries_created - std::min<std::uint64_t>(m.delivered_to_server, m.queries_created);
    m.duplicates_suppressed += server_.duplicates();
    m.rejected = rejected_;
    for (const auto& [r, rl] : relays_) m.peak_sessions = std::max<std::uint64_t>(m.peak_sessions, rl.peak_sessions());
    m.ack_latency = summarize(std::move(ack_lat));
    m.response_latency = summarize(std::move(resp_lat));
    return m;
  }

  Scenario sc_;
  net::Network network_;
  server::ServerNode server_;
  std::map<DeviceId, farmer::FarmerNode> farmers_;
  std::map<RelayId, relay::RelayNode> relays_;

  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::uint64_t next_seq_ = 0;
  Seconds now_ = 0;
  Seconds horizon_ = 0;
  bool ran_ = false;
  Trace trace_;

  std::map<DeviceId, std::set<Seconds>> scheduled_timers_;
  std::map<DeviceId, Seconds> pending_scan_;
  std::uint64_t rejected_ = 0;
};

inline RunResult run(const Scenario& scenario, std::optional<Seconds> until = std::nullopt) {
  Simulation sim(scenario);
  return sim.run(until);
}

}  // namespace ruralsense::sim
