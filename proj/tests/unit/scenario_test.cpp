#include <gtest/gtest.h>

#include "ruralsense/sim/scenario.hpp"
#include "test_support.hpp"

namespace rs = ruralsense;
using namespace ruralsense::sim;
using nlohmann::json;

namespace {

json minimal() {
  return json::parse(R"({
    "devices": [{"id": "D1", "signal": "None"}],
    "users": [{"uid": "U1", "device": "D1"}],
    "relays": [{"id": "R1", "signal": "Good", "visits": [{"cluster": ["D1"], "arrive": 100, "depart": 200}]}],
    "workload": [{"uid": "U1", "create_time": 0, "payload": {"photo_bytes": 5}}]
  })");
}

LoadError load_error(const json& doc) {
  try {
    load_scenario(doc);
  } catch (const LoadError& e) {
    return e;
  }
  ADD_FAILURE() << "scenario loaded but should not have";
  return LoadError(LoadErrc::Schema, "", "");
}

}  // namespace

TEST(LoadScenario, Defaults) {
  auto sc = load_scenario(minimal());
  EXPECT_EQ(sc.timers.t_r, 86400);
  EXPECT_EQ(sc.timers.t_d, 3600);
  EXPECT_EQ(sc.timers.scan_period, 300);
  EXPECT_FALSE(sc.timers.max_retries);
  EXPECT_EQ(sc.horizon, 2 * 86400);
  EXPECT_EQ(sc.link.capacity, 8u);
  EXPECT_EQ(sc.expert.latency({rs::UserId("U1"), 1}), 1800);
  EXPECT_EQ(sc.users[0].credentials, "pin:U1");
  EXPECT_FALSE(sc.case_label);
}

TEST(LoadScenario, ShippedCaseAHasGoodRelayDuringVisits) {
  auto sc = load_scenario(rstest::load_json("scenarios/case_a.json"));
  ASSERT_EQ(sc.case_label, 'A');
  ASSERT_EQ(sc.relays.size(), 1u);
  const auto& r = sc.relays[0];
  EXPECT_EQ(r.visits.size(), 3u);
  for (const auto& v : r.visits) {
    EXPECT_TRUE(r.signal.holds_over(v.arrive, v.depart, [](auto l) { return l == rs::net::SignalLevel::Good; }));
  }
}

TEST(LoadScenario, AllShippedScenariosLoad) {
  for (const auto* name : rstest::kShippedScenarios) {
    EXPECT_NO_THROW(load_scenario(rstest::load_json(std::string("scenarios/") + name + ".json"))) << name;
  }
}

TEST(LoadScenario, TdNotBelowTr) {
  auto doc = minimal();
  doc["timers"] = {{"t_d", 86400}, {"t_r", 86400}};
  auto e = load_error(doc);
  EXPECT_EQ(e.code(), LoadErrc::NegativeDuration);
  EXPECT_EQ(e.field(), "/timers/t_d");
}

TEST(LoadScenario, ZeroLengthVisit) {
  auto doc = minimal();
  doc["relays"][0]["visits"][0]["depart"] = 100;
  EXPECT_EQ(load_error(doc).code(), LoadErrc::OverlappingVisits);
}

TEST(LoadScenario, OverlappingVisits) {
  auto doc = minimal();
  doc["relays"][0]["visits"].push_back({{"cluster", {"D1"}}, {"arrive", 150}, {"depart", 300}});
  auto e = load_error(doc);
  EXPECT_EQ(e.code(), LoadErrc::OverlappingVisits);
  EXPECT_EQ(e.field(), "/relays/0");
}

TEST(LoadScenario, UnknownIds) {
  auto doc = minimal();
  doc["users"][0]["device"] = "D9";
  EXPECT_EQ(load_error(doc).field(), "/users/0/device");
  doc = minimal();
  doc["workload"][0]["uid"] = "U9";
  EXPECT_EQ(load_error(doc).code(), LoadErrc::UnknownId);
  doc = minimal();
  doc["relays"][0]["visits"][0]["cluster"] = {"D1", "D7"};
  EXPECT_EQ(load_error(doc).field(), "/relays/0/visits/0/cluster/1");
  doc = minimal();
  doc["alerts"] = {{{"time", 5}, {"targets", {"U8"}}, {"body", "x"}}};
  EXPECT_EQ(load_error(doc).code(), LoadErrc::UnknownId);
}

TEST(LoadScenario, DuplicateIds) {
  auto doc = minimal();
  doc["relays"][0]["id"] = "D1";
  EXPECT_EQ(load_error(doc).code(), LoadErrc::DuplicateId);
  doc = minimal();
  doc["users"].push_back({{"uid", "U1"}, {"device", "D1"}});
  EXPECT_EQ(load_error(doc).code(), LoadErrc::DuplicateId);
  doc = minimal();
  doc["devices"][0]["id"] = "server";
  doc["users"][0]["device"] = "server";
  EXPECT_EQ(load_error(doc).code(), LoadErrc::DuplicateId);
}

TEST(LoadScenario, SchemaErrors) {
  auto doc = minimal();
  doc["devices"][0]["signal"] = "Medium";
  EXPECT_EQ(load_error(doc).code(), LoadErrc::Schema);
  doc = minimal();
  doc["workload"][0]["payload"] = json::object();
  EXPECT_EQ(load_error(doc).field(), "/workload/0/payload");
  doc = minimal();
  doc["workload"][0]["create_time"] = 172800;
  EXPECT_EQ(load_error(doc).field(), "/workload/0/create_time");
  doc = minimal();
  doc["devices"][0]["signal"] = json::array({json::array({5, "Good"})});
  EXPECT_EQ(load_error(doc).field(), "/devices/0/signal");
  doc = minimal();
  doc["devices"][0]["id"] = "bad id";
  EXPECT_EQ(load_error(doc).code(), LoadErrc::Schema);
  doc = minimal();
  doc.erase("devices");
  EXPECT_EQ(load_error(doc).field(), "/devices");
  doc = minimal();
  doc["case"] = "E";
  EXPECT_EQ(load_error(doc).field(), "/case");
}

TEST(LoadScenario, SyntaxError) {
  try {
    parse_scenario("{ not json");
    FAIL();
  } catch (const LoadError& e) {
    EXPECT_EQ(e.code(), LoadErrc::Syntax);
  }
}

TEST(LoadScenario, CaseCheckerRejectsMislabel) {
  auto doc = rstest::load_json("scenarios/case_a.json");
  doc["devices"][0]["signal"] = "Poor";
  auto e = load_error(doc);
  EXPECT_EQ(e.code(), LoadErrc::CaseMismatch);
  EXPECT_EQ(e.field(), "/devices/0/signal");

  doc = rstest::load_json("scenarios/case_a.json");
  doc["relays"][0]["signal"] = json::array({json::array({0, "Good"}), json::array({7000, "None"})});
  EXPECT_EQ(load_error(doc).field(), "/relays/0/signal");

  doc = rstest::load_json("scenarios/case_d.json");
  doc["relays"][0]["signal"] = "None";
  EXPECT_EQ(load_error(doc).code(), LoadErrc::CaseMismatch);

  doc = rstest::load_json("scenarios/case_b.json");
  doc["case"] = "A";
  EXPECT_EQ(load_error(doc).code(), LoadErrc::CaseMismatch);

  doc = rstest::load_json("scenarios/case_c.json");
  doc["devices"][0]["signal"] = "Good";
  EXPECT_EQ(load_error(doc).code(), LoadErrc::CaseMismatch);
}

TEST(LoadScenario, GeneratorsExpand) {
  auto doc = minimal();
  doc["horizon"] = 20000;
  doc["relays"][0].erase("visits");
  doc["relays"][0]["periodic"] = {{"cluster", {"D1"}}, {"every", 5000}, {"dwell", 100}};
  auto sc = load_scenario(doc);
  ASSERT_EQ(sc.relays[0].visits.size(), 3u);
  EXPECT_EQ(sc.relays[0].visits[0].arrive, 5000);

  doc["devices"][0]["signal"] = {{"alternate", {{"first", "Poor"}, {"second", "Good"}, {"dwell", 600}}}};
  sc = load_scenario(doc);
  EXPECT_EQ(sc.devices[0].signal.at(599), rs::net::SignalLevel::Poor);
  EXPECT_EQ(sc.devices[0].signal.at(600), rs::net::SignalLevel::Good);
  EXPECT_EQ(sc.devices[0].signal.at(1200), rs::net::SignalLevel::Poor);
}

TEST(LoadScenario, SeedDrivesRandomVisits) {
  auto doc = minimal();
  doc["relays"][0].erase("visits");
  doc["relays"][0]["random"] = {{"cluster", {"D1"}}, {"gap", {600, 7200}}, {"dwell", {60, 600}}};
  auto a = load_scenario(doc, 1);
  auto b = load_scenario(doc, 1);
  auto c = load_scenario(doc, 2);
  EXPECT_EQ(a.relays[0].visits, b.relays[0].visits);
  EXPECT_NE(a.relays[0].visits, c.relays[0].visits);
  EXPECT_EQ(c.seed, 2u);
}

TEST(LoadScenario, WorkloadSortedStably) {
  auto doc = minimal();
  doc["workload"] = {{{"uid", "U1"}, {"create_time", 50}, {"payload", {{"voice_bytes", 1}}}},
                     {{"uid", "U1"}, {"create_time", 10}, {"payload", {{"voice_bytes", 2}}}},
                     {{"uid", "U1"}, {"create_time", 50}, {"payload", {{"voice_bytes", 3}}}}};
  auto sc = load_scenario(doc);
  EXPECT_EQ(sc.workload[0].payload.voice_bytes, 2u);
  EXPECT_EQ(sc.workload[1].payload.voice_bytes, 1u);
  EXPECT_EQ(sc.workload[2].payload.voice_bytes, 3u);
}

TEST(LoadScenario, RandomGeneratorProducesValidDocuments) {
  for (std::uint64_t s = 0; s < 200; ++s) EXPECT_NO_THROW(load_scenario(rstest::random_scenario(s))) << s;
}
