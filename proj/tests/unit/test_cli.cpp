#include <sstream>

#include <gtest/gtest.h>

#include <json.hpp>

#include "guiagent/cli.hpp"
#include "support.hpp"

using namespace guiagent;
using nlohmann::json;
using testsupport::data;
using testsupport::TempDir;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string demo(const std::string& rel) { return data("demo_shop/" + rel).string(); }

std::vector<std::string> replay_args(const std::string& out, const std::string& device_suffix = "") {
  return {"replay", demo("checkout_requirement.txt"), "--device", "sim:" + demo("manifest.json") + device_suffix,
          "--backend", demo("replay.conf"), "--out", out};
}

}  // namespace

TEST(Cli, HelpAndUsageErrors) {
  auto help = cli({"--help"});
  EXPECT_EQ(help.code, kExitPass);
  EXPECT_NE(help.out.find("sim-inspect"), std::string::npos);
  auto sub = cli({"run", "--help"});
  EXPECT_EQ(sub.code, kExitPass);
  EXPECT_NE(sub.out.find("--max-steps"), std::string::npos);
  EXPECT_EQ(cli({}).code, kExitError);
  EXPECT_EQ(cli({"frobnicate"}).code, kExitError);
  EXPECT_EQ(cli({"run", demo("checkout_requirement.txt")}).code, kExitError);
}

TEST(Cli, SimInspect) {
  auto r = cli({"sim-inspect", demo("manifest.json"), "--overlay", demo("remove_confirm.json")});
  EXPECT_EQ(r.code, kExitPass);
  EXPECT_NE(r.out.find("page payment (4 elements)"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("cart.checkout_button --click--> payment"), std::string::npos);
}

TEST(Cli, ReplayCleanPassesAndOverlayFails) {
  TempDir tmp;
  auto clean = cli(replay_args((tmp / "clean").string()));
  EXPECT_EQ(clean.code, kExitPass) << clean.out << clean.err;
  EXPECT_NE(clean.out.find("-> PASS"), std::string::npos);
  auto log = json::parse(testsupport::slurp(tmp / "clean/checkout_requirement/log.json"));
  EXPECT_EQ(log["entries"].size(), 5u);
  auto report = json::parse(testsupport::slurp(tmp / "clean/checkout_requirement/report.json"));
  EXPECT_EQ(report["totals"]["points"], 3);
  EXPECT_EQ(report["totals"]["passed"], 3);

  auto broken = cli(replay_args((tmp / "broken").string(), "+" + demo("remove_confirm.json")));
  EXPECT_EQ(broken.code, kExitFail) << broken.out << broken.err;
  auto r2 = json::parse(testsupport::slurp(tmp / "broken/checkout_requirement/report.json"));
  EXPECT_EQ(r2["oracles"][0]["result"], "fail");
  EXPECT_EQ(r2["oracles"][1]["result"], "pass");
}

TEST(Cli, HallucinationFailsTheRun) {
  TempDir tmp;
  auto r = cli({"run", demo("checkout_requirement.txt"), "--device", "sim:" + demo("manifest.json"), "--overlay",
                demo("cart_to_ad.json"), "--backend", demo("scripted.conf"), "--out", tmp.path().string()});
  EXPECT_EQ(r.code, kExitFail) << r.err;
  EXPECT_NE(r.out.find("interaction failed"), std::string::npos) << r.out;
  auto log = json::parse(testsupport::slurp(tmp / "checkout_requirement/log.json"));
  EXPECT_EQ(log["failed_index"], 4);
}

TEST(Cli, RecordThenReplayIsIdentical) {
  TempDir tmp;
  auto rec = cli({"record", demo("checkout_requirement.txt"), "--device", "sim:" + demo("manifest.json"),
                  "--backend", demo("scripted.conf"), "--out", (tmp / "rec").string()});
  ASSERT_EQ(rec.code, kExitPass) << rec.err;
  ASSERT_TRUE(std::filesystem::is_directory(tmp / "rec/fixtures"));
  auto rep = cli({"replay", demo("checkout_requirement.txt"), "--device", "sim:" + demo("manifest.json"),
                  "--backend", demo("replay.conf"), "--fixtures", (tmp / "rec/fixtures").string(), "--out",
                  (tmp / "rep").string()});
  ASSERT_EQ(rep.code, kExitPass) << rep.err;
  for (const char* f : {"report.json", "log.json"}) {
    EXPECT_EQ(testsupport::slurp(tmp / "rec/checkout_requirement" / f),
              testsupport::slurp(tmp / "rep/checkout_requirement" / f))
        << f;
  }
}

TEST(Cli, VerifyExistingLog) {
  TempDir tmp;
  ASSERT_EQ(cli(replay_args((tmp / "run").string())).code, kExitPass);
  auto v = cli({"verify", (tmp / "run/checkout_requirement").string(), demo("oracles.json"), "--backend",
                demo("scripted.conf"), "--out", (tmp / "v").string()});
  EXPECT_EQ(v.code, kExitPass) << v.err;
  EXPECT_NE(v.out.find("points 3/3 passed"), std::string::npos) << v.out;
  EXPECT_TRUE(std::filesystem::exists(tmp / "v/report.json"));

  testsupport::spit(tmp / "run/checkout_requirement/log.json", "{\"entries\": [");
  auto corrupt = cli({"verify", (tmp / "run/checkout_requirement").string(), demo("oracles.json"), "--backend",
                      demo("scripted.conf")});
  EXPECT_EQ(corrupt.code, kExitError);
  EXPECT_NE(corrupt.err.find("error:"), std::string::npos);
}

TEST(Cli, Eval) {
  TempDir tmp;
  auto r = cli({"eval", data("eval_suite").string(), "--out", tmp.path().string()});
  EXPECT_EQ(r.code, kExitPass) << r.err;
  const auto expected = testsupport::slurp(data("eval_suite_expected.csv"));
  EXPECT_EQ(r.out, expected);
  EXPECT_EQ(testsupport::slurp(tmp / "benchmark.csv"), expected);
  EXPECT_TRUE(std::filesystem::exists(tmp / "benchmark.json"));

  TempDir empty;
  EXPECT_EQ(cli({"eval", empty.path().string(), "--out", (tmp / "x").string()}).code, kExitError);
}

TEST(Cli, ConfigurationErrorsExitTwo) {
  TempDir tmp;
  const std::string out = tmp.path().string();
  auto missing_manifest = cli({"run", demo("checkout_requirement.txt"), "--device", "sim:/nonexistent/app.json",
                               "--backend", demo("scripted.conf"), "--out", out});
  EXPECT_EQ(missing_manifest.code, kExitError);
  EXPECT_NE(missing_manifest.err.find("manifest not found"), std::string::npos);

  auto no_fixtures = cli({"replay", demo("checkout_requirement.txt"), "--device", "sim:" + demo("manifest.json"),
                          "--backend", demo("replay.conf"), "--fixtures", (tmp / "none").string(), "--out", out});
  EXPECT_EQ(no_fixtures.code, kExitError);

  testsupport::spit(tmp / "empty_fixtures/.keep", "");
  auto miss = cli({"replay", demo("checkout_requirement.txt"), "--device", "sim:" + demo("manifest.json"),
                   "--backend", demo("replay.conf"), "--fixtures", (tmp / "empty_fixtures").string(), "--out", out});
  EXPECT_EQ(miss.code, kExitError);
  EXPECT_NE(miss.err.find("no replay fixture"), std::string::npos) << miss.err;

  testsupport::spit(tmp / "http.conf", "backend = http\n");
  auto no_endpoint = cli({"record", demo("checkout_requirement.txt"), "--device", "sim:" + demo("manifest.json"),
                          "--backend", (tmp / "http.conf").string(), "--out", out});
  EXPECT_EQ(no_endpoint.code, kExitError);
  EXPECT_NE(no_endpoint.err.find("endpoint"), std::string::npos);

  auto record_replay = cli({"record", demo("checkout_requirement.txt"), "--device", "sim:" + demo("manifest.json"),
                            "--backend", demo("replay.conf"), "--out", out});
  EXPECT_EQ(record_replay.code, kExitError);

  auto zero_budget = cli({"run", demo("checkout_requirement.txt"), "--device", "sim:" + demo("manifest.json"),
                          "--backend", demo("scripted.conf"), "--max-steps", "0", "--out", out});
  EXPECT_EQ(zero_budget.code, kExitError);

  auto twice = cli({"run", demo("checkout_requirement.txt"), "--device",
                    "sim:" + demo("manifest.json") + "+" + demo("remove_confirm.json"), "--overlay",
                    demo("remove_confirm.json"), "--backend", demo("scripted.conf"), "--out", out});
  EXPECT_EQ(twice.code, kExitError);

  auto missing_req = cli({"run", "/nonexistent.txt", "--device", "sim:" + demo("manifest.json"), "--backend",
                          demo("scripted.conf"), "--out", out});
  EXPECT_EQ(missing_req.code, kExitError);
}
