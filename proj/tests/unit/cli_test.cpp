#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "ruralsense.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using namespace ruralsense::sim;

namespace {

struct Cmd {
  int rc = -1;
  std::string out;
};

Cmd cli(const std::string& args, const std::string& env = "") {
  const std::string cmd = env + " '" RS_CLI_PATH "' " + args + " 2>&1";
  Cmd res;
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return res;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) res.out.append(buf, n);
  const int status = ::pclose(p);
  res.rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return res;
}

std::string scenario(const std::string& name) { return rstest::source_path("scenarios/" + name + ".json"); }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("rs_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& n) const { return (dir_ / n).string(); }
  void write(const std::string& n, const std::string& text) const { std::ofstream(dir_ / n) << text; }
  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, RunTwiceSameSeedDiffsClean) {
  ASSERT_EQ(cli("run " + scenario("case_a") + " --seed 7 --trace " + path("a.trace")).rc, 0);
  ASSERT_EQ(cli("run " + scenario("case_a") + " --seed 7 --trace " + path("b.trace")).rc, 0);
  EXPECT_EQ(cli("diff " + path("a.trace") + " " + path("b.trace")).rc, 0);
  EXPECT_EQ(rstest::slurp(path("a.trace")), rstest::slurp(rstest::source_path("tests/golden/case_a.trace")));
}

TEST_F(CliTest, DiffMismatchExit3) {
  ASSERT_EQ(cli("run " + scenario("case_a") + " --trace " + path("a.trace")).rc, 0);
  ASSERT_EQ(cli("run " + scenario("case_b") + " --trace " + path("b.trace")).rc, 0);
  auto r = cli("diff " + path("a.trace") + " " + path("b.trace"));
  EXPECT_EQ(r.rc, 3);
  EXPECT_NE(r.out.find("seq="), std::string::npos);
}

TEST_F(CliTest, ValidateGoodAndBad) {
  auto ok = cli("validate " + scenario("shared_phone"));
  EXPECT_EQ(ok.rc, 0);
  EXPECT_EQ(ok.out.rfind("ok ", 0), 0u);

  auto doc = rstest::load_json("scenarios/case_a.json");
  doc["devices"][0]["signal"] = "Poor";
  write("bad.json", doc.dump());
  auto bad = cli("validate " + path("bad.json"));
  EXPECT_EQ(bad.rc, 1);
  EXPECT_NE(bad.out.find("CaseMismatch"), std::string::npos);

  write("syntax.json", "{");
  EXPECT_EQ(cli("validate " + path("syntax.json")).rc, 1);
  EXPECT_EQ(cli("validate " + path("missing.json")).rc, 2);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_EQ(cli("run " + scenario("case_a") + " --bogus").rc, 1);
  EXPECT_EQ(cli("frobnicate").rc, 1);
  EXPECT_EQ(cli("run " + scenario("case_a") + " --format xml").rc, 1);
  EXPECT_EQ(cli("sweep " + scenario("case_a") + " --param nope --values 1").rc, 1);
}

TEST_F(CliTest, SweepRowsInInputOrder) {
  auto r = cli("sweep " + scenario("capacity") + " --param relay_capacity --values 8,1,4");
  ASSERT_EQ(r.rc, 0) << r.out;
  const auto a = r.out.find("value=8 ");
  const auto b = r.out.find("value=1 ");
  const auto c = r.out.find("value=4 ");
  ASSERT_NE(a, std::string::npos);
  ASSERT_NE(b, std::string::npos);
  ASSERT_NE(c, std::string::npos);
  EXPECT_LT(a, b);
  EXPECT_LT(b, c);
  EXPECT_NE(r.out.find("value=1 queries_created=10"), std::string::npos);
}

TEST_F(CliTest, SeedPrecedence) {
  // Random relay visits make the trace seed-sensitive.
  auto doc = rstest::load_json("scenarios/case_a.json");
  doc["relays"][0].erase("periodic");
  doc["relays"][0].erase("visits");
  doc["relays"][0]["random"] = {{"cluster", {"9800000001"}}, {"gap", {600, 7200}}, {"dwell", {60, 600}}};
  write("rnd.json", doc.dump());
  const auto sc = path("rnd.json");
  ASSERT_EQ(cli("run " + sc + " --seed 11 --trace " + path("flag.trace")).rc, 0);
  ASSERT_EQ(cli("run " + sc + " --trace " + path("env.trace"), "RURALSENSE_SEED=11").rc, 0);
  ASSERT_EQ(cli("run " + sc + " --seed 11 --trace " + path("both.trace"), "RURALSENSE_SEED=12").rc, 0);
  ASSERT_EQ(cli("run " + sc + " --trace " + path("other.trace"), "RURALSENSE_SEED=12").rc, 0);
  ASSERT_EQ(cli("run " + sc + " --trace " + path("file.trace")).rc, 0);
  const auto flag = rstest::slurp(path("flag.trace"));
  EXPECT_EQ(flag, rstest::slurp(path("env.trace")));
  EXPECT_EQ(flag, rstest::slurp(path("both.trace")));
  EXPECT_NE(flag, rstest::slurp(path("other.trace")));
  EXPECT_EQ(rstest::slurp(path("file.trace")), format_trace(run(load_scenario(doc)).trace));
}

TEST_F(CliTest, MetricsReproducibleFromTrace) {
  ASSERT_EQ(cli("run " + scenario("offline_branch") + " --trace " + path("t") + " --metrics " + path("m")).rc, 0);
  auto r = cli("metrics " + path("t"));
  ASSERT_EQ(r.rc, 0);
  EXPECT_EQ(r.out, rstest::slurp(path("m")));
  auto res = run(load_scenario(rstest::load_json("scenarios/offline_branch.json")));
  EXPECT_EQ(rstest::slurp(path("m")), format_metrics_line(res.metrics) + "\n");
}

TEST_F(CliTest, MalformedTraceRejected) {
  write("bad.trace", "seq=0 t=0 node=x kind=Nope\n");
  EXPECT_NE(cli("metrics " + path("bad.trace")).rc, 0);
}
