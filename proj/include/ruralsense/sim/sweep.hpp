#pragma once

#include <cstdint>
#include <future>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "ruralsense/sim/engine.hpp"
#include "ruralsense/sim/scenario.hpp"

namespace ruralsense::sim {

inline constexpr std::string_view kSweepParams[] = {"relay_capacity", "t_d",            "t_r",  "scan_period",
                                                    "visit_frequency", "expert_latency", "seed"};

struct SweepRow {
  std::string value;
  Metrics metrics;
  std::vector<std::string> violations;
};

/// Rewrites one tunable in a scenario document. visit_frequency sets the period of every periodic visit generator.
inline void apply_param(nlohmann::json& doc, std::string_view param, std::int64_t value) {
  if (param == "relay_capacity") {
    doc["link"]["capacity"] = value;
    if (doc.contains("relays")) {
      for (auto& r : doc["relays"]) {
        if (r.contains("capacity")) r["capacity"] = value;
      }
    }
  } else if (param == "t_d" || param == "t_r" || param == "scan_period") {
    doc["timers"][std::string(param)] = value;
  } else if (param == "visit_frequency") {
    bool any = false;
    if (doc.contains("relays")) {
      for (auto& r : doc["relays"]) {
        if (r.contains("periodic")) {
          r["periodic"]["every"] = value;
          any = true;
        }
      }
    }
    if (!any) throw std::invalid_argument("visit_frequency needs at least one relay with a periodic visit plan");
  } else if (param == "expert_latency") {
    doc["expert"]["latency"] = value;
  } else if (param == "seed") {
    doc["seed"] = value;
  } else {
    throw std::invalid_argument("unknown sweep parameter: " + std::string(param));
  }
}

/// One run per value, executed concurrently; rows come back in input order.
inline std::vector<SweepRow> sweep(const nlohmann::json& doc, std::string_view param,
                                   const std::vector<std::int64_t>& values,
                                   std::optional<std::uint64_t> seed_override = std::nullopt) {
  std::vector<Scenario> scenarios;
  for (auto v : values) {
    auto copy = doc;
    apply_param(copy, param, v);
    scenarios.push_back(load_scenario(copy, param == "seed" ? std::optional<std::uint64_t>{} : seed_override));
  }
  std::vector<std::future<RunResult>> runs;
  for (const auto& sc : scenarios) {
    runs.push_back(std::async(std::launch::async, [&sc] { return run(sc); }));
  }
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    auto res = runs[i].get();
    rows.push_back({std::to_string(values[i]), res.metrics, std::move(res.violations)});
  }
  return rows;
}

}  // namespace ruralsense::sim
