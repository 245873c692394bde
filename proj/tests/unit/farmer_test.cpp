#include <gtest/gtest.h>

#include <random>

#include "ruralsense/farmer/farmer_node.hpp"

namespace rs = ruralsense;
using namespace ruralsense::farmer;
using rs::net::SignalLevel;

namespace {

const rs::UserId U1("U1"), U2("U2");
const rs::DeviceId D1("D1");
const rs::RelayId R1("R1"), R2("R2");

PayloadDescriptor photo(std::uint64_t bytes = 1'000'000) {
  PayloadDescriptor p;
  p.photo_bytes = bytes;
  p.labels = {"leaf"};
  return p;
}

TimerConfig cfg() { return TimerConfig{}; }

rs::EventKey create(FarmerNode& node, const rs::UserId& uid, rs::Seconds now) {
  auto s = node.login(uid, now);
  auto key = node.create_event(s, photo(), now).key();
  node.logout();
  return key;
}

Envelope downstream(EnvelopeKind kind, const rs::UserId& uid, rs::EventId eid, const rs::DeviceId& dev,
                    std::string body = "advice") {
  Envelope e;
  e.kind = kind;
  e.eid = eid;
  e.uid = uid;
  e.target_device = dev;
  e.hops = {"server"};
  e.body = std::move(body);
  return e;
}

rs::relay::AuthToken token(const rs::RelayId& r, const rs::UserId& u) { return {r, u, D1, 0}; }

D2DLink link_ok() { return {true, rs::net::Admission::Admitted, 1'000'000}; }

}  // namespace

TEST(CreateEvent, CounterAndLogicalDevice) {
  FarmerNode own(rs::DeviceId("U1"), cfg());
  auto s = own.login(U1, 0);
  const auto& first = own.create_event(s, photo(), 0);
  EXPECT_EQ(first.event.eid, 1u);
  EXPECT_EQ(first.event.logical_device, rs::DeviceId("U1"));
  EXPECT_EQ(first.state, RecordState::StoredLocal);
  EXPECT_EQ(first.response_deadline, 86400);
  EXPECT_EQ(own.create_event(s, photo(), 10).event.eid, 2u);

  FarmerNode shared(D1, cfg());
  auto s2 = shared.login(U2, 5);
  const auto& guest = shared.create_event(s2, photo(), 5);
  EXPECT_EQ(guest.event.logical_device, D1);
  EXPECT_NE(guest.event.logical_device.str(), U2.str());
}

TEST(CreateEvent, CountersArePerUser) {
  FarmerNode node(D1, cfg());
  EXPECT_EQ(create(node, U1, 0).eid, 1u);
  EXPECT_EQ(create(node, U2, 1).eid, 1u);
  EXPECT_EQ(create(node, U1, 2).eid, 2u);
}

TEST(CreateEvent, Errors) {
  FarmerNode node(D1, cfg());
  LoginSession stale{U1, D1, 0};
  try {
    node.create_event(stale, photo(), 0);
    FAIL();
  } catch (const rs::ProtocolError& e) {
    EXPECT_EQ(e.code(), rs::Errc::NoActiveSession);
  }
  auto s = node.login(U1, 0);
  try {
    node.create_event(s, PayloadDescriptor{}, 0);
    FAIL();
  } catch (const rs::ProtocolError& e) {
    EXPECT_EQ(e.code(), rs::Errc::EmptyPayload);
  }
}

TEST(ScanAndSelect, Examples) {
  const auto c = cfg();
  EXPECT_EQ(scan_and_select(D1, 0, SignalLevel::Good, {}, c), AccessDecision{DirectNow{}});
  EXPECT_EQ(scan_and_select(D1, 0, SignalLevel::None, {R1}, c), AccessDecision{HandoffToRelay{R1}});
  EXPECT_EQ(scan_and_select(D1, 0, SignalLevel::None, {R2, R1}, c), AccessDecision{HandoffToRelay{R1}});
  EXPECT_EQ(scan_and_select(D1, 1000, SignalLevel::Poor, {}, c), AccessDecision{WaitAndRescan{1300}});
  EXPECT_EQ(scan_and_select(D1, 0, SignalLevel::None, {}, c), AccessDecision{NoPath{}});
}

TEST(ScanAndSelect, GoodBeatsRelayAndPoorUsesRelay) {
  const auto c = cfg();
  EXPECT_EQ(scan_and_select(D1, 0, SignalLevel::Good, {R1}, c), AccessDecision{DirectNow{}});
  EXPECT_EQ(scan_and_select(D1, 0, SignalLevel::Poor, {R2}, c), AccessDecision{HandoffToRelay{R2}});
  EXPECT_EQ(decision_name(WaitAndRescan{}), "WaitAndRescan");
}

TEST(SelectRelay, PrefersDifferentRelay) {
  EXPECT_EQ(select_relay({R1, R2}, R1), R2);
  EXPECT_EQ(select_relay({R1, R2}, R2), R1);
  EXPECT_EQ(select_relay({R1}, R1), R1);
  EXPECT_EQ(select_relay({R1, R2}, std::nullopt), R1);
  EXPECT_EQ(select_relay({}, R1), std::nullopt);
}

TEST(SelectRelay, PropertyNeverLastWhenAlternativeExists) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 500; ++i) {
    std::set<rs::RelayId> contacts;
    const int n = 2 + static_cast<int>(rng() % 5);
    while (static_cast<int>(contacts.size()) < n) contacts.insert(rs::RelayId("R" + std::to_string(rng() % 9)));
    auto it = contacts.begin();
    std::advance(it, rng() % contacts.size());
    EXPECT_NE(select_relay(contacts, *it), *it);
  }
}

TEST(TransmitDirect, GoodSignalProducesQuery) {
  FarmerNode node(D1, cfg());
  auto key = create(node, U1, 0);
  auto [rec, env] = node.transmit_direct(key, 50, SignalLevel::Good);
  EXPECT_EQ(rec.state, RecordState::Sent);
  EXPECT_EQ(rec.ack_deadline, 3650);
  ASSERT_TRUE(env);
  EXPECT_EQ(env->kind, EnvelopeKind::Query);
  EXPECT_EQ(env->channel, rs::protocol::Channel::CellularData);
  EXPECT_EQ(env->hops, std::vector<std::string>{"D1"});
  EXPECT_EQ(env->query->eid, 1u);
  EXPECT_EQ(rs::protocol::validate_envelope(*env), std::nullopt);
}

TEST(TransmitDirect, SentRecordIsRejected) {
  FarmerNode node(D1, cfg());
  auto key = create(node, U1, 0);
  node.transmit_direct(key, 0, SignalLevel::Good);
  try {
    node.transmit_direct(key, 1, SignalLevel::Good);
    FAIL();
  } catch (const rs::ProtocolError& e) {
    EXPECT_EQ(e.code(), rs::Errc::InvalidState);
  }
}

TEST(TransmitDirect, BadSignal) {
  FarmerNode node(D1, cfg());
  auto key = create(node, U1, 0);
  try {
    node.transmit_direct(key, 0, SignalLevel::Poor);
    FAIL();
  } catch (const rs::ProtocolError& e) {
    EXPECT_EQ(e.code(), rs::Errc::BadSignal);
  }
  EXPECT_EQ(node.record(key).state, RecordState::StoredLocal);
}

TEST(TransmitDirect, ExpiredRecordIsDiscardedWithoutEnvelope) {
  FarmerNode node(D1, cfg());
  auto key = create(node, U1, 0);
  auto [rec, env] = node.transmit_direct(key, 86400, SignalLevel::Good);
  EXPECT_EQ(rec.state, RecordState::Discarded);
  EXPECT_FALSE(env);
  EXPECT_FALSE(rec.payload_held);
}

TEST(HandoffToRelay, Success) {
  FarmerNode node(D1, cfg());
  auto key = create(node, U1, 0);
  auto [rec, xfer] = node.handoff_to_relay(key, R1, token(R1, U1), 3600, {true, rs::net::Admission::Admitted, 400'000});
  EXPECT_EQ(rec.state, RecordState::Sent);
  EXPECT_EQ(rec.ack_deadline, 7200);
  EXPECT_EQ(rec.last_relay, R1);
  ASSERT_TRUE(xfer);
  EXPECT_EQ(xfer->relay, R1);
  EXPECT_EQ(xfer->started_at, 3600);
  EXPECT_EQ(xfer->completes_at, 3603);
  EXPECT_EQ(xfer->event.payload.photo_bytes, 1'000'000u);
}

TEST(HandoffToRelay, Errors) {
  FarmerNode node(D1, cfg());
  auto key = create(node, U1, 0);
  auto code_of = [&](auto&& fn) {
    try {
      fn();
    } catch (const rs::ProtocolError& e) {
      return e.code();
    }
    return rs::Errc::InvalidState;
  };
  EXPECT_EQ(code_of([&] { node.handoff_to_relay(key, R1, token(R1, U1), 10, {false, {}, 1}); }), rs::Errc::NoContact);
  EXPECT_EQ(code_of([&] { node.handoff_to_relay(key, R1, std::nullopt, 10, link_ok()); }), rs::Errc::NotRegistered);
  EXPECT_EQ(code_of([&] { node.handoff_to_relay(key, R1, token(R2, U1), 10, link_ok()); }), rs::Errc::NotRegistered);
  EXPECT_EQ(code_of([&] { node.handoff_to_relay(key, R1, token(R1, U2), 10, link_ok()); }), rs::Errc::NotRegistered);
  EXPECT_EQ(code_of([&] {
              node.handoff_to_relay(key, R1, token(R1, U1), 10, {true, rs::net::Admission::Rejected, 1});
            }),
            rs::Errc::RelayFull);
  EXPECT_EQ(node.record(key).state, RecordState::StoredLocal);
}

TEST(HandleDownstream, AckDeletesPayload) {
  FarmerNode node(D1, cfg());
  auto key = create(node, U1, 0);
  node.handoff_to_relay(key, R1, token(R1, U1), 100, link_ok());
  auto out = node.handle_downstream(downstream(EnvelopeKind::Ack, U1, 1, D1), 100);
  EXPECT_EQ(out.disposition, Disposition::AckApplied);
  EXPECT_EQ(out.actions, std::vector{ProtocolAction::DeletePayload});
  EXPECT_EQ(node.record(key).state, RecordState::Acked);
  EXPECT_FALSE(node.record(key).payload_held);
  EXPECT_EQ(node.record(key).event.payload.total_bytes(), 0u);
  EXPECT_EQ(node.stats().acks_received, 1u);
}

TEST(HandleDownstream, LateResponseAfterDiscardIsDropped) {
  FarmerNode node(D1, cfg());
  auto key = create(node, U1, 0);
  node.handoff_to_relay(key, R1, token(R1, U1), 100, link_ok());
  node.on_timer(86400);
  ASSERT_EQ(node.record(key).state, RecordState::Discarded);
  auto out = node.handle_downstream(downstream(EnvelopeKind::Response, U1, 1, D1), 90000);
  EXPECT_EQ(out.disposition, Disposition::AfterDiscard);
  EXPECT_TRUE(out.actions.empty());
  EXPECT_EQ(node.stats().late_responses, 1u);
  EXPECT_TRUE(node.mailbox(U1)->entries().empty());
}

TEST(HandleDownstream, SharedPhoneResponseGoesToQueryingUser) {
  FarmerNode node(D1, cfg());
  node.add_resident(U1);
  auto key = create(node, U2, 0);
  node.handoff_to_relay(key, R1, token(R1, U2), 10, link_ok());
  auto out = node.handle_downstream(downstream(EnvelopeKind::Response, U2, 1, D1, "spray neem"), 20);
  EXPECT_EQ(out.disposition, Disposition::ResponseApplied);
  ASSERT_EQ(node.mailbox(U2)->entries().size(), 1u);
  EXPECT_EQ(node.mailbox(U2)->entries()[0].body, "spray neem");
  EXPECT_TRUE(node.mailbox(U1)->entries().empty());
}

TEST(HandleDownstream, DuplicateAndUnknownCopies) {
  FarmerNode node(D1, cfg());
  auto key = create(node, U1, 0);
  node.handoff_to_relay(key, R1, token(R1, U1), 10, link_ok());
  node.handle_downstream(downstream(EnvelopeKind::Response, U1, 1, D1), 20);
  EXPECT_EQ(node.handle_downstream(downstream(EnvelopeKind::Response, U1, 1, D1), 30).disposition,
            Disposition::AfterCompleted);
  EXPECT_EQ(node.handle_downstream(downstream(EnvelopeKind::Ack, U1, 1, D1), 30).disposition,
            Disposition::AfterCompleted);
  EXPECT_EQ(node.handle_downstream(downstream(EnvelopeKind::Ack, U1, 9, D1), 30).disposition, Disposition::Unknown);
  EXPECT_EQ(node.handle_downstream(downstream(EnvelopeKind::Ack, U1, 1, rs::DeviceId("D9")), 30).disposition,
            Disposition::Unknown);
  EXPECT_EQ(node.mailbox(U1)->entries().size(), 1u);
  EXPECT_EQ(node.stats().duplicate_copies, 2u);
  EXPECT_EQ(node.stats().stray_downstream, 4u);
}

TEST(HandleDownstream, SecondAckIsRedundant) {
  FarmerNode node(D1, cfg());
  auto key = create(node, U1, 0);
  node.handoff_to_relay(key, R1, token(R1, U1), 10, link_ok());
  node.handle_downstream(downstream(EnvelopeKind::Ack, U1, 1, D1), 20);
  EXPECT_EQ(node.handle_downstream(downstream(EnvelopeKind::Ack, U1, 1, D1), 21).disposition, Disposition::Redundant);
}

TEST(HandleDownstream, AlertsReachEveryResidentOnce) {
  FarmerNode node(D1, cfg());
  node.add_resident(U1);
  node.add_resident(U2);
  Envelope alert;
  alert.kind = EnvelopeKind::Alert;
  alert.uid = U1;
  alert.target_device = D1;
  alert.hops = {"server"};
  alert.body = "hail";
  alert.alert_id = 7;
  auto out = node.handle_downstream(alert, 5);
  EXPECT_EQ(out.disposition, Disposition::AlertStored);
  EXPECT_EQ(out.alert_recipients, (std::vector<rs::UserId>{U1, U2}));
  EXPECT_EQ(node.handle_downstream(alert, 6).disposition, Disposition::AlertDuplicate);
  EXPECT_EQ(node.mailbox(U1)->entries().size(), 1u);
  EXPECT_EQ(node.mailbox(U2)->entries().size(), 1u);
  EXPECT_FALSE(node.mailbox(U2)->entries()[0].eid);
}

TEST(HandleDownstream, RejectsMalformed) {
  FarmerNode node(D1, cfg());
  Envelope bad = downstream(EnvelopeKind::Ack, U1, 1, D1);
  bad.eid.reset();
  EXPECT_THROW(node.handle_downstream(bad, 0), rs::ProtocolError);
  Envelope q = downstream(EnvelopeKind::Query, U1, 1, D1);
  q.query = rs::protocol::QueryEvent{};
  EXPECT_THROW(node.handle_downstream(q, 0), rs::ProtocolError);
}

TEST(OnTimer, RetransmitThenDiscard) {
  FarmerNode node(D1, cfg());
  auto key = create(node, U1, 0);
  node.handoff_to_relay(key, R1, token(R1, U1), 100, link_ok());
  EXPECT_EQ(node.pending_deadlines(), (std::set<rs::Seconds>{3700, 86400}));
  auto acts = node.on_timer(3700);
  ASSERT_EQ(acts.size(), 1u);
  EXPECT_EQ(acts[0].second, ProtocolAction::EmitRetransmit);
  EXPECT_EQ(node.stored_local(), std::vector<rs::EventKey>{key});
  const auto& rec = node.record(key);
  EXPECT_EQ(select_relay({R1, R2}, rec.last_relay), R2);
  EXPECT_EQ(select_relay({R1}, rec.last_relay), R1);
  auto later = node.on_timer(86400);
  ASSERT_EQ(later.size(), 1u);
  EXPECT_EQ(later[0].second, ProtocolAction::EmitDiscard);
  EXPECT_TRUE(node.pending_deadlines().empty());
}

TEST(Login, DeviceBusyAndMailboxFetch) {
  FarmerNode node(D1, cfg());
  auto s1 = node.login(U1, 0);
  EXPECT_EQ(node.login(U1, 1), s1);
  try {
    node.login(U2, 2);
    FAIL();
  } catch (const rs::ProtocolError& e) {
    EXPECT_EQ(e.code(), rs::Errc::DeviceBusy);
  }
  EXPECT_TRUE(node.fetch_mailbox(s1).empty());
  node.logout();
  EXPECT_THROW(node.fetch_mailbox(s1), rs::ProtocolError);
}

TEST(Login, GuestFetchSeesOnlyOwnEntriesAndReadMarking) {
  FarmerNode node(D1, cfg());
  auto k1 = create(node, U1, 0);
  auto k2 = create(node, U2, 1);
  for (const auto& k : {k1, k2}) {
    node.handoff_to_relay(k, R1, token(R1, k.uid), 10, link_ok());
    node.handle_downstream(downstream(EnvelopeKind::Response, k.uid, k.eid, D1, "for " + k.uid.str()), 20);
  }
  auto s = node.login(U2, 30);
  auto first = node.fetch_mailbox(s);
  ASSERT_EQ(first.size(), 1u);
  EXPECT_EQ(first[0].body, "for U2");
  EXPECT_FALSE(first[0].read);
  auto second = node.fetch_mailbox(s);
  ASSERT_EQ(second.size(), 1u);
  EXPECT_TRUE(second[0].read);
  EXPECT_EQ(second[0].body, first[0].body);
}

TEST(MailboxProperty, NoCrossUserLeakage) {
  std::mt19937_64 rng(11);
  const std::vector<rs::UserId> users{U1, U2, rs::UserId("U3")};
  for (int round = 0; round < 50; ++round) {
    FarmerNode node(D1, cfg());
    rs::Seconds now = 0;
    std::vector<rs::EventKey> keys;
    for (int step = 0; step < 40; ++step) {
      now += static_cast<rs::Seconds>(rng() % 50);
      const auto& u = users[rng() % users.size()];
      switch (rng() % 3) {
        case 0: keys.push_back(create(node, u, now)); break;
        case 1:
          if (!keys.empty()) {
            const auto k = keys[rng() % keys.size()];
            if (node.record(k).state == RecordState::StoredLocal) {
              node.handoff_to_relay(k, R1, token(R1, k.uid), now, link_ok());
            }
            node.handle_downstream(downstream(EnvelopeKind::Response, k.uid, k.eid, D1, k.uid.str()), now);
          }
          break;
        default: {
          auto s = node.login(u, now);
          for (const auto& e : node.fetch_mailbox(s)) ASSERT_EQ(e.body, u.str());
          node.logout();
        }
      }
    }
    for (const auto& u : users) {
      if (const auto* mb = node.mailbox(u)) {
        std::set<rs::EventId> seen;
        for (const auto& e : mb->entries()) {
          ASSERT_EQ(e.body, u.str());
          ASSERT_TRUE(seen.insert(*e.eid).second);
        }
      }
    }
  }
}
