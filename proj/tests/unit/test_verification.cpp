#include <gtest/gtest.h>

#include "guiagent/backends.hpp"
#include "guiagent/device.hpp"
#include "guiagent/interaction.hpp"
#include "guiagent/verification.hpp"
#include "support.hpp"

using namespace guiagent;
using nlohmann::json;
using testsupport::data;
using testsupport::TempDir;

namespace {

ElementDescriptor el(int id, std::string text, std::string fn, std::string rid = "") {
  ElementDescriptor e;
  e.marker_id = id;
  e.text = std::move(text);
  e.class_name = "android.widget.Button";
  e.inferred_function = std::move(fn);
  e.resource_id = std::move(rid);
  e.bounds = {0, id * 100, 500, id * 100 + 80};
  return e;
}

ObservationRecord state(std::string summary, std::vector<ElementDescriptor> els, std::string shot = "") {
  ObservationRecord o;
  o.page_summary = std::move(summary);
  o.elements = std::move(els);
  o.screenshot = std::move(shot);
  return o;
}

// Cart (0) --click Checkout--> Payment (1, final observation).
InteractionLog two_state_log(const std::filesystem::path& root = {}, bool with_shots = false) {
  InteractionLog log;
  log.root = root;
  LogEntry e;
  e.step_command = "Tap Checkout";
  e.observation = state("Cart page listing the headphones",
                        {el(1, "Total: $59.00", "shows the cart total"), el(2, "Checkout", "proceeds to payment")},
                        with_shots ? "screenshots/000.png" : "");
  e.action = UiAction::click(2);
  e.state_changed = true;
  log.entries.push_back(e);
  log.final_observation = state("Payment page with order total",
                                {el(1, "Order total: $59.00", "shows the amount due"), el(2, "Confirm", "places the order")},
                                with_shots ? "screenshots/001.png" : "");
  return log;
}

class Recorder {
 public:
  std::function<std::string(const ChatRequest&)> fn;
  std::vector<ChatRequest> seen;
  std::shared_ptr<Backend> backend() {
    return std::make_shared<CallbackBackend>([this](const ChatRequest& r) {
      seen.push_back(r);
      return fn(r);
    });
  }
};

}  // namespace

TEST(Decompose, PointIdsAndErrors) {
  Recorder rec;
  rec.fn = [](const ChatRequest&) { return std::string(R"({"points": ["A holds", " ", "B holds"]})"); };
  Gateway gw(rec.backend());
  auto pts = decompose_oracle({"O1", "A and B hold"}, gw);
  ASSERT_EQ(pts.size(), 2u);
  EXPECT_EQ(pts[0].point_id, "O1.p1");
  EXPECT_EQ(pts[1].point_id, "O1.p2");
  EXPECT_EQ(pts[1].question, "B holds");
  EXPECT_EQ(pts[1].oracle_id, "O1");
  EXPECT_NE(rec.seen[0].all_text().find("Test oracle: A and B hold"), std::string::npos);

  rec.fn = [](const ChatRequest&) { return std::string(R"({"points": []})"); };
  EXPECT_THROW(decompose_oracle({"O2", "x"}, gw), DecompositionError);
  rec.fn = [](const ChatRequest&) { return std::string("nope"); };
  EXPECT_THROW(decompose_oracle({"O3", "x"}, gw), DecompositionError);
  EXPECT_THROW(decompose_oracle({"O4", "  "}, gw), PreconditionError);
}

TEST(Evidence, OverviewListsStatesAndActions) {
  auto text = log_overview(two_state_log());
  EXPECT_NE(text.find("State 0: Cart page listing the headphones\n"), std::string::npos) << text;
  EXPECT_NE(text.find("Action 0: click \"Checkout\" (state 0 -> state 1)\n"), std::string::npos) << text;
  EXPECT_NE(text.find("State 1: Payment page with order total\n"), std::string::npos);
  EXPECT_NE(text.find("text=\"Confirm\""), std::string::npos);
}

TEST(Evidence, TransitionTriple) {
  auto log = two_state_log();
  EvidenceSelection sel;
  sel.subject = "Checkout";
  sel.transitions = {0};
  auto ev = render_evidence(sel, log);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].dimension, Dimension::Transition);
  ASSERT_EQ(ev[0].sources.size(), 1u);
  EXPECT_EQ(ev[0].sources[0].text,
            "State 0 \"Cart page listing the headphones\" --click \"Checkout\"--> state 1 \"Payment page with order "
            "total\"");
  EXPECT_NE(ev[0].combined_text.find("Page sequence: \"Cart page listing the headphones\" -> \"Payment page with "
                                     "order total\""),
            std::string::npos);
}

TEST(Evidence, ElementFilterAndMissingSubject) {
  auto log = two_state_log();
  EvidenceSelection sel;
  sel.subject = "Confirm button";
  sel.element_states = {1};
  auto ev = render_evidence(sel, log);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_NE(ev[0].combined_text.find("text=\"Confirm\""), std::string::npos);
  EXPECT_EQ(ev[0].combined_text.find("Order total"), std::string::npos);

  sel.subject = "Cancel button";
  auto none = render_evidence(sel, log);
  EXPECT_NE(none[0].combined_text.find("no element matches \"Cancel button\""), std::string::npos);
}

TEST(Evidence, InvalidIndicesDroppedAndFallback) {
  auto log = two_state_log();
  EvidenceSelection sel;
  sel.subject = "total";
  sel.element_states = {7};
  sel.page_states = {1, 1, 0};
  sel.transitions = {3};
  std::vector<std::string> warnings;
  auto ev = render_evidence(sel, log, &warnings);
  EXPECT_EQ(warnings.size(), 2u);
  ASSERT_EQ(ev.size(), 1u);
  EXPECT_EQ(ev[0].dimension, Dimension::Page);
  ASSERT_EQ(ev[0].sources.size(), 2u);
  EXPECT_EQ(ev[0].sources[0].index, 0u);

  EvidenceSelection empty;
  empty.subject = "total";
  auto fb = render_evidence(empty, log);
  ASSERT_EQ(fb.size(), 1u);
  EXPECT_EQ(fb[0].dimension, Dimension::Element);
  EXPECT_EQ(fb[0].sources[0].index, 1u);

  InteractionLog blank;
  EXPECT_THROW(render_evidence(empty, blank), EvidenceError);
}

TEST(Judge, AttachesScreenshotOfLastReferencedState) {
  TempDir tmp;
  testsupport::spit(tmp / "screenshots/000.png", "first");
  testsupport::spit(tmp / "screenshots/001.png", "second");
  auto log = two_state_log(tmp.path(), true);
  Recorder rec;
  rec.fn = [](const ChatRequest&) { return std::string(R"({"verdict": "pass", "explanation": "It opens."})"); };
  Gateway gw(rec.backend());
  EvidenceSelection sel;
  sel.transitions = {0};
  auto v = judge({"O1.p1", "Checkout opens payment", "O1"}, render_evidence(sel, log), log, gw);
  EXPECT_EQ(v.outcome, PointOutcome::Passed);
  EXPECT_EQ(v.explanation, "It opens.");
  const auto& parts = rec.seen.at(0).messages.back().parts;
  const auto& img = std::get<ImagePart>(parts.front());
  EXPECT_EQ(std::string(img.bytes.begin(), img.bytes.end()), "second");

  rec.fn = [](const ChatRequest&) { return std::string(R"({"verdict": "maybe"})"); };
  auto inc = judge({"O1.p1", "q", "O1"}, render_evidence(sel, log), log, gw);
  EXPECT_EQ(inc.outcome, PointOutcome::Inconclusive);
  EXPECT_THROW(judge({"O1.p1", "q", "O1"}, {}, log, gw), PreconditionError);
}

TEST(Judge, MissingFixtureIsNotInconclusive) {
  auto log = two_state_log();
  Gateway gw(std::make_shared<CallbackBackend>(
      [](const ChatRequest&) -> std::string { throw ReplayMissError("abc"); }));
  EvidenceSelection sel;
  EXPECT_THROW(judge({"p", "q", "O"}, render_evidence(sel, log), log, gw), ReplayMissError);
}

TEST(Verify, SinglePointOracleCostsThreeCalls) {
  auto log = two_state_log();
  Recorder rec;
  rec.fn = [](const ChatRequest& r) -> std::string {
    if (r.agent == "decomposer") return R"({"points": ["The payment page shows a Confirm button"]})";
    if (r.agent == "extractor") return R"({"subject": "Confirm button", "element": [1]})";
    return R"({"verdict": "pass", "explanation": "Confirm is listed."})";
  };
  Gateway gw(rec.backend());
  auto report = verify({{"O1", "Confirm is shown"}}, log, gw);
  EXPECT_EQ(gw.call_count(), 3u);
  EXPECT_TRUE(report.all_passed());
  EXPECT_EQ(report.totals.points, 1);
  EXPECT_EQ(report.totals.passed, 1);
  EXPECT_EQ(report.usage, gw.ledger().totals());
  auto extract_text = rec.seen.at(1).all_text();
  EXPECT_NE(extract_text.find("Verification point: The payment page shows a Confirm button\n\nInteraction log:\n"),
            std::string::npos);
}

TEST(Verify, AggregationRules) {
  auto log = two_state_log();
  Recorder rec;
  rec.fn = [](const ChatRequest& r) -> std::string {
    const auto text = r.all_text();
    if (r.agent == "decomposer") {
      if (text.find("broken") != std::string::npos) return "garbage";
      return R"({"points": ["good thing", "bad thing"]})";
    }
    if (r.agent == "extractor") return R"({"subject": "thing", "page": [0]})";
    if (text.find("bad thing") != std::string::npos) return R"({"verdict": "fail", "explanation": "No."})";
    return R"({"verdict": "pass", "explanation": "Yes."})";
  };
  Gateway gw(rec.backend());
  auto report = verify({{"O1", "mixed"}, {"O2", "broken"}}, log, gw);
  ASSERT_EQ(report.oracles.size(), 2u);
  EXPECT_EQ(report.oracles[0].result, PointOutcome::Failed);
  EXPECT_EQ(report.oracles[1].result, PointOutcome::Inconclusive);
  EXPECT_EQ(report.oracles[1].points.size(), 1u);
  EXPECT_FALSE(report.oracles[1].warnings.empty());
  EXPECT_EQ(report.totals.points, 3);
  EXPECT_EQ(report.totals.passed, 1);
  EXPECT_EQ(report.totals.failed, 1);
  EXPECT_EQ(report.totals.inconclusive, 1);
  EXPECT_FALSE(report.all_passed());

  auto j = to_json(report);
  EXPECT_EQ(j["oracles"][0]["result"], "fail");
  EXPECT_EQ(j["oracles"][0]["points"][1]["outcome"], "failed");
  EXPECT_EQ(j["oracles"][0]["points"][0]["evidence"][0]["dimension"], "page");
  EXPECT_EQ(j["oracles"][1]["result"], "inconclusive");
  EXPECT_EQ(j["totals"]["points"], 3);
  EXPECT_TRUE(j["usage"].contains("prompt_tokens"));
  EXPECT_THROW(verify({}, log, gw), PreconditionError);
}

TEST(Verify, DemoShopEndToEndWithScriptedModel) {
  TempDir tmp;
  auto dev = load_sim_app(data("demo_shop/manifest.json"));
  Gateway gw(ScriptedBackend::from_file(data("demo_shop/scripted_rules.json")));
  Observer observer(gw);
  RunContext ctx{*dev, gw, observer, tmp.path()};
  auto log = run_commands("Type \"headphones\" in the search box, tap Wireless Headphones in the results, tap Add "
                          "to cart, open the cart, then tap Checkout.",
                          ctx);
  ASSERT_EQ(log.entries.size(), 5u);
  auto report = verify(load_oracles(data("demo_shop/oracles.json")), log, gw);
  EXPECT_EQ(report.totals.points, 3);
  EXPECT_TRUE(report.all_passed()) << to_json(report).dump(2);
  const auto& transition = report.oracles[1].points[0].verdict.evidence;
  ASSERT_FALSE(transition.empty());
  EXPECT_EQ(transition[0].dimension, Dimension::Transition);
  EXPECT_EQ(transition[0].sources[0].index, 4u);
}

TEST(Oracles, LoadFormats) {
  TempDir tmp;
  testsupport::spit(tmp / "a.json", R"(["First", {"oracle_id": "X", "text": "Second"}])");
  auto a = load_oracles(tmp / "a.json");
  ASSERT_EQ(a.size(), 2u);
  EXPECT_EQ(a[0].oracle_id, "O1");
  EXPECT_EQ(a[1].oracle_id, "X");
  testsupport::spit(tmp / "b.txt", "One\n\n  Two  \n");
  auto b = load_oracles(tmp / "b.txt");
  ASSERT_EQ(b.size(), 2u);
  EXPECT_EQ(b[1].oracle_id, "O2");
  EXPECT_EQ(b[1].text, "Two");
  EXPECT_THROW(load_oracles(tmp / "missing.txt"), ConfigError);
  testsupport::spit(tmp / "c.json", "[1, 2");
  EXPECT_THROW(load_oracles(tmp / "c.json"), ConfigError);
}
