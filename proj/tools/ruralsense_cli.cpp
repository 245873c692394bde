// Command-line front end: validate, run, sweep and diff scenarios and traces.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ruralsense.hpp"

namespace {

namespace rs = ruralsense;

constexpr int kOk = 0;
constexpr int kValidationError = 1;
constexpr int kRuntimeError = 2;
constexpr int kDiffMismatch = 3;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spill(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

/// --seed beats RURALSENSE_SEED, which beats the scenario file.
std::optional<std::uint64_t> effective_seed(const std::optional<std::uint64_t>& flag) {
  if (flag) return flag;
  if (const char* env = std::getenv("RURALSENSE_SEED"); env && *env) {
    try {
      return std::stoull(env);
    } catch (const std::logic_error&) {
      throw rs::sim::LoadError(rs::sim::LoadErrc::Schema, "$RURALSENSE_SEED", "not an unsigned integer");
    }
  }
  return std::nullopt;
}

std::string render(const rs::sim::Metrics& m, const std::string& format) {
  return format == "table" ? rs::sim::format_metrics_table(m) : rs::sim::format_metrics_line(m) + "\n";
}

int cmd_validate(const std::string& path) {
  const auto sc = rs::sim::parse_scenario(slurp(path), effective_seed(std::nullopt));
  std::cout << "ok " << path << ": " << sc.devices.size() << " devices, " << sc.users.size() << " users, "
            << sc.relays.size() << " relays, " << sc.workload.size() << " queries, horizon " << sc.horizon;
  if (sc.case_label) std::cout << ", case " << *sc.case_label;
  std::cout << "\n";
  return kOk;
}

int cmd_run(const std::string& path, const std::optional<std::uint64_t>& seed, const std::optional<rs::Seconds>& until,
            const std::string& trace_path, const std::string& metrics_path, const std::string& format) {
  const auto sc = rs::sim::parse_scenario(slurp(path), effective_seed(seed));
  const auto result = rs::sim::run(sc, until);
  if (!trace_path.empty()) spill(trace_path, rs::sim::format_trace(result.trace));
  if (!metrics_path.empty()) spill(metrics_path, rs::sim::format_metrics_line(result.metrics) + "\n");
  std::cout << render(result.metrics, format);
  for (const auto& v : result.violations) std::cerr << "invariant violated: " << v << "\n";
  return result.violations.empty() ? kOk : kRuntimeError;
}

int cmd_sweep(const std::string& path, const std::string& param, const std::vector<std::int64_t>& values,
              const std::optional<std::uint64_t>& seed) {
  const auto doc = rs::sim::parse_scenario_json(slurp(path));
  std::vector<rs::sim::SweepRow> rows;
  try {
    rows = rs::sim::sweep(doc, param, values, effective_seed(seed));
  } catch (const std::invalid_argument& e) {
    throw rs::sim::LoadError(rs::sim::LoadErrc::Schema, "--param", e.what());
  }
  int rc = kOk;
  for (const auto& row : rows) {
    std::cout << "param=" << param << " value=" << row.value << " " << rs::sim::format_metrics_line(row.metrics) << "\n";
    for (const auto& v : row.violations) {
      std::cerr << "value " << row.value << ": invariant violated: " << v << "\n";
      rc = kRuntimeError;
    }
  }
  return rc;
}

int cmd_diff(const std::string& a, const std::string& b) {
  const auto lhs = slurp(a);
  const auto rhs = slurp(b);
  if (lhs == rhs) return kOk;
  std::istringstream la(lhs), lb(rhs);
  std::string x, y;
  for (std::size_t line = 1;; ++line) {
    const bool ha = static_cast<bool>(std::getline(la, x));
    const bool hb = static_cast<bool>(std::getline(lb, y));
    if (!ha && !hb) break;
    if (!ha || !hb || x != y) {
      std::cout << "traces differ at line " << line << "\n< " << (ha ? x : "<eof>") << "\n> " << (hb ? y : "<eof>")
                << "\n";
      break;
    }
  }
  return kDiffMismatch;
}

int cmd_metrics(const std::string& trace_path, const std::string& format) {
  const auto trace = rs::sim::parse_trace(slurp(trace_path));
  std::cout << render(rs::sim::collect_metrics(trace), format);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ruralsense: DTN agro-advisory protocol simulator"};
  app.require_subcommand(1);

  std::string scenario, trace_path, metrics_path, format = "lines", param, trace_a, trace_b;
  std::optional<std::uint64_t> seed;
  std::optional<rs::Seconds> until;
  std::vector<std::int64_t> values;

  auto* validate = app.add_subcommand("validate", "Load and check a scenario file");
  validate->add_option("scenario", scenario, "Scenario JSON file")->required();

  auto* run = app.add_subcommand("run", "Simulate a scenario");
  run->add_option("scenario", scenario, "Scenario JSON file")->required();
  run->add_option("--seed", seed, "Seed override (beats RURALSENSE_SEED)");
  run->add_option("--until", until, "Stop before this simulated second instead of the scenario horizon");
  run->add_option("--trace", trace_path, "Write the trace to this file");
  run->add_option("--metrics", metrics_path, "Write the metrics line to this file");
  run->add_option("--format", format, "Metrics output on stdout")->check(CLI::IsMember({"lines", "table"}));

  auto* sweep = app.add_subcommand("sweep", "Run once per parameter value and print one metrics row each");
  sweep->add_option("scenario", scenario, "Scenario JSON file")->required();
  sweep->add_option("--param", param, "relay_capacity|t_d|t_r|scan_period|visit_frequency|expert_latency|seed")
      ->required();
  sweep->add_option("--values", values, "Comma-separated integer values")->required()->delimiter(',');
  sweep->add_option("--seed", seed, "Seed override");

  auto* diff = app.add_subcommand("diff", "Byte-compare two trace files");
  diff->add_option("trace_a", trace_a)->required();
  diff->add_option("trace_b", trace_b)->required();

  auto* metrics = app.add_subcommand("metrics", "Recompute metrics from a trace file");
  metrics->add_option("trace", trace_a)->required();
  metrics->add_option("--format", format)->check(CLI::IsMember({"lines", "table"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return kValidationError;
  }

  try {
    if (*validate) return cmd_validate(scenario);
    if (*run) return cmd_run(scenario, seed, until, trace_path, metrics_path, format);
    if (*sweep) return cmd_sweep(scenario, param, values, seed);
    if (*diff) return cmd_diff(trace_a, trace_b);
    if (*metrics) return cmd_metrics(trace_a, format);
  } catch (const rs::sim::LoadError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidationError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kRuntimeError;
}
