#include <sys/stat.h>

#include <random>

#include <gtest/gtest.h>

#include "guiagent/device.hpp"
#include "guiagent/hierarchy.hpp"
#include "guiagent/raster.hpp"
#include "support.hpp"

using namespace guiagent;
using nlohmann::json;
using testsupport::data;
using testsupport::TempDir;

TEST(Bounds, ParseAndFormat) {
  auto b = parse_bounds("[10,20][110,220]");
  EXPECT_EQ(b, (Bounds{10, 20, 110, 220}));
  EXPECT_EQ(b.width(), 100);
  EXPECT_EQ(b.center(), (Point{60, 120}));
  EXPECT_EQ(format_bounds(b), "[10,20][110,220]");
  EXPECT_EQ(parse_bounds("[0,0][0,0]").area(), 0);
}

TEST(Bounds, RejectsMalformedLiterals) {
  for (const char* bad : {"", "[1,2][3]", "[5,5][4,6]", "[5,5][6,4]", "[-1,0][2,2]", "[1,2][3,4]x", "(1,2)(3,4)",
                          "[a,b][c,d]", "[1,2] [3,4]"}) {
    EXPECT_THROW(parse_bounds(bad), ParseError) << bad;
  }
}

TEST(Bounds, RandomRoundTrip) {
  std::mt19937 rng(7);
  std::uniform_int_distribution<int> coord(0, 4000);
  for (int i = 0; i < 500; ++i) {
    int l = coord(rng), t = coord(rng);
    Bounds b{l, t, l + coord(rng), t + coord(rng)};
    EXPECT_EQ(parse_bounds(format_bounds(b)), b);
  }
}

TEST(Bounds, IntersectionOverUnion) {
  Bounds a{0, 0, 10, 10}, b{5, 0, 15, 10};
  EXPECT_DOUBLE_EQ(intersection_over_union(a, a), 1.0);
  EXPECT_DOUBLE_EQ(intersection_over_union(a, b), 50.0 / 150.0);
  EXPECT_DOUBLE_EQ(intersection_over_union(a, Bounds{20, 20, 30, 30}), 0.0);
  EXPECT_DOUBLE_EQ(intersection_over_union(Bounds{}, Bounds{}), 0.0);
}

TEST(Hierarchy, RealDumpCounts) {
  auto expected = json::parse(testsupport::slurp(data("device/settings_dump.expected.json")));
  auto root = parse_hierarchy(testsupport::slurp(data("device/settings_dump.xml")));
  EXPECT_EQ(root.class_name, "hierarchy");
  EXPECT_EQ(count_nodes(root), expected["node_count"].get<std::size_t>());
  EXPECT_EQ(extract_interactive_nodes(root, PredicateMode::Strict).size(),
            expected["strict_interactive"].get<std::size_t>());
  EXPECT_EQ(extract_interactive_nodes(root, PredicateMode::Literal).size(),
            expected["literal_interactive"].get<std::size_t>());
}

TEST(Hierarchy, ParsesAttributesAndFlags) {
  auto root = parse_hierarchy(
      R"(<hierarchy><node class="a.B" text="Hi &amp; bye" content-desc="d" resource-id="r:id/x" bounds="[0,0][10,10]")"
      R"( clickable="true" enabled="false" scrollable="true" long-clickable="false"><node class="a.EditText")"
      R"( bounds="[1,1][5,5]" enabled="true"/></node></hierarchy>)");
  ASSERT_EQ(root.children.size(), 1u);
  const auto& n = root.children[0];
  EXPECT_EQ(n.text, "Hi & bye");
  EXPECT_EQ(n.resource_id, "r:id/x");
  EXPECT_TRUE(n.flags.clickable);
  EXPECT_FALSE(n.flags.enabled);
  EXPECT_TRUE(n.flags.scrollable);
  EXPECT_EQ(root.bounds, (Bounds{0, 0, 10, 10}));
  EXPECT_EQ(count_nodes(root), 2u);
  EXPECT_EQ(extract_interactive_nodes(root, PredicateMode::Strict).size(), 1u);
  EXPECT_EQ(extract_interactive_nodes(root, PredicateMode::Literal).size(), 2u);
}

TEST(Hierarchy, Errors) {
  EXPECT_THROW(parse_hierarchy(""), EmptyTreeError);
  EXPECT_THROW(parse_hierarchy("<hierarchy"), ParseError);
  EXPECT_THROW(parse_hierarchy("<something/>"), EmptyTreeError);
  EXPECT_THROW(parse_hierarchy(R"(<hierarchy><node bounds="[9,9][1,1]"/></hierarchy>)"), ParseError);
  EXPECT_THROW(parse_predicate_mode("loose"), ConfigError);
  EXPECT_EQ(parse_predicate_mode("literal"), PredicateMode::Literal);
}

TEST(Hierarchy, WriteThenParseRoundTrip) {
  UiNode a;
  a.class_name = "android.widget.Button";
  a.text = "Say \"hi\" <now>";
  a.bounds = {1, 2, 30, 40};
  a.flags.clickable = true;
  a.flags.enabled = true;
  UiNode b;
  b.class_name = "android.widget.EditText";
  b.content_desc = "name";
  b.bounds = {0, 50, 100, 90};
  b.flags.editable = true;
  auto root = parse_hierarchy(write_hierarchy({a, b}, "com.example"));
  ASSERT_EQ(root.children.size(), 2u);
  EXPECT_EQ(root.children[0], a);
  EXPECT_EQ(root.children[1], b);
}

TEST(ConcreteAction, ValidateAgainstScreen) {
  ScreenSize s{100, 200};
  EXPECT_NO_THROW(ConcreteAction::tap({99, 199}).validate(s));
  EXPECT_THROW(ConcreteAction::tap({100, 10}).validate(s), PreconditionError);
  EXPECT_THROW(ConcreteAction::swipe({1, 1}, {1, 250}).validate(s), PreconditionError);
  EXPECT_THROW(ConcreteAction::input_text("").validate(s), PreconditionError);
  EXPECT_NO_THROW(ConcreteAction::back().validate(s));
  auto sw = ConcreteAction::swipe({1, 2}, {3, 4}, 250);
  EXPECT_EQ(concrete_action_from_json(to_json(sw)), sw);
}

TEST(SimManifest, ErrorsNameTheFieldPath) {
  auto doc = json::parse(testsupport::slurp(data("demo_shop/manifest.json")));
  doc["pages"][1]["elements"][0]["bounds"] = "[0,0][oops]";
  try {
    SimManifest::from_json(doc);
    FAIL();
  } catch (const ManifestError& e) {
    EXPECT_NE(std::string(e.what()).find("pages[1].elements[0].bounds"), std::string::npos) << e.what();
  }
  auto doc2 = json::parse(testsupport::slurp(data("demo_shop/manifest.json")));
  doc2["transitions"][0]["target_page"] = "nowhere";
  EXPECT_THROW(SimManifest::from_json(doc2), ManifestError);
  EXPECT_THROW(SimManifest::load("/nonexistent/manifest.json"), ManifestError);
}

class DemoShop : public ::testing::Test {
 protected:
  void SetUp() override { dev = load_sim_app(data("demo_shop/manifest.json")); }
  Point center_of(const std::string& id) {
    for (const auto& e : dev->visible_elements()) {
      if (e.id == id) return e.bounds.center();
    }
    ADD_FAILURE() << "no element " << id;
    return {};
  }
  std::unique_ptr<SimDevice> dev;
};

TEST_F(DemoShop, CheckoutFlowWithVariables) {
  EXPECT_EQ(dev->state().current_page, "home");
  auto d0 = dev->state_digest();
  EXPECT_TRUE(dev->perform(ConcreteAction::tap(center_of("item_headphones"))).state_changed);
  EXPECT_EQ(dev->state().current_page, "product");
  auto out = dev->perform(ConcreteAction::tap(center_of("add_to_cart")));
  EXPECT_TRUE(out.state_changed);
  EXPECT_EQ(dev->state().variables.at("cart_count"), "1");
  dev->perform(ConcreteAction::tap(center_of("cart_icon")));
  EXPECT_EQ(dev->state().current_page, "cart");
  bool saw_total = false;
  for (const auto& e : dev->visible_elements()) saw_total |= e.text == "Total: $59.00";
  EXPECT_TRUE(saw_total);
  dev->perform(ConcreteAction::back());
  EXPECT_EQ(dev->state().current_page, "product");
  EXPECT_NE(dev->state_digest(), d0);
}

TEST_F(DemoShop, NoOpActionsDoNotChangeState) {
  auto before = dev->state_digest();
  auto out = dev->perform(ConcreteAction::tap({1070, 1900}));
  EXPECT_FALSE(out.state_changed);
  EXPECT_EQ(out.state_digest, before);
  EXPECT_FALSE(dev->perform(ConcreteAction::back()).state_changed);
  EXPECT_THROW(dev->perform(ConcreteAction::tap({5000, 1})), PreconditionError);
}

TEST_F(DemoShop, TypingIntoSearchNavigates) {
  dev->perform(ConcreteAction::tap(center_of("search_box")));
  dev->perform(ConcreteAction::input_text("headphones"));
  EXPECT_EQ(dev->state().current_page, "results");
  bool found = false;
  for (const auto& e : dev->visible_elements()) found |= e.text == "Results for headphones";
  EXPECT_TRUE(found);
}

TEST_F(DemoShop, DumpAndScreenshotAreConsistent) {
  auto root = parse_hierarchy(dev->dump_hierarchy());
  EXPECT_EQ(root.children.size(), dev->visible_elements().size());
  auto shot = dev->capture_screenshot();
  EXPECT_EQ(shot.width(), 1080);
  EXPECT_EQ(shot.height(), 1920);
  EXPECT_EQ(shot, dev->capture_screenshot());
  auto png = encode_png(shot);
  EXPECT_EQ(decode_png(png), shot);
}

TEST(SimOverlay, RemoveSetTextRetarget) {
  auto m = SimManifest::load(data("demo_shop/manifest.json"));
  apply_overlay(m, json::parse(testsupport::slurp(data("demo_shop/remove_confirm.json"))));
  for (const auto& e : m.find_page("payment")->elements) EXPECT_NE(e.id, "confirm_button");

  apply_overlay(m, json::parse(R"([{"op": "set_text", "page": "home", "element": "title", "value": "Shop!"}])"));
  EXPECT_EQ(m.find_page("home")->elements[0].text, "Shop!");

  EXPECT_THROW(apply_overlay(m, json::parse(R"([{"op": "remove_element", "page": "nope", "element": "x"}])")),
               ManifestError);
  EXPECT_THROW(apply_overlay(m, json::parse(R"([{"op": "explode", "page": "home", "element": "title"}])")),
               ManifestError);

  auto dev = load_sim_app(data("demo_shop/manifest.json"), data("demo_shop/cart_to_ad.json"));
  dev->perform(ConcreteAction::tap({540, 470}));
  ASSERT_EQ(dev->state().current_page, "product");
  dev->perform(ConcreteAction::tap({970, 80}));
  EXPECT_EQ(dev->state().current_page, "ad");
}

TEST(Raster, DrawingClipsAndCropWorks) {
  Raster r(20, 10, {0, 0, 0});
  r.fill_rect(-5, -5, 5, 5, {255, 0, 0});
  EXPECT_EQ(r.at(0, 0), (Rgb{255, 0, 0}));
  EXPECT_EQ(r.at(5, 5), (Rgb{0, 0, 0}));
  auto c = r.crop(0, 0, 5, 5);
  EXPECT_EQ(c.width(), 5);
  EXPECT_EQ(c.at(4, 4), (Rgb{255, 0, 0}));
  EXPECT_THROW(r.crop(0, 0, 30, 5), ImageError);
  EXPECT_EQ(text_width("ab", 2), 2 * 6 * 2 - 2);
  std::vector<std::uint8_t> junk = {1, 2, 3};
  EXPECT_THROW(decode_png(junk), ImageError);
}

TEST(Bridge, InputCommands) {
  EXPECT_EQ(BridgeDevice::input_command(ConcreteAction::tap({50, 25})), "input tap 50 25");
  EXPECT_EQ(BridgeDevice::input_command(ConcreteAction::long_press({5, 6}, 800)), "input swipe 5 6 5 6 800");
  EXPECT_EQ(BridgeDevice::input_command(ConcreteAction::swipe({1, 2}, {3, 4}, 400)), "input swipe 1 2 3 4 400");
  EXPECT_EQ(BridgeDevice::input_command(ConcreteAction::back()), "input keyevent 4");
  EXPECT_EQ(BridgeDevice::escape_input_text("a b&c"), "a%sb\\&c");
}

class FakeBridge : public ::testing::Test {
 protected:
  void SetUp() override {
    auto png = encode_png(Raster(40, 80, {10, 20, 30}));
    testsupport::spit(dir / "screen.png", std::string(png.begin(), png.end()));
    testsupport::spit(dir / "dump.xml",
                      R"(<hierarchy><node class="android.widget.Button" text="OK" bounds="[0,0][40,40]")"
                      R"( clickable="true" enabled="true"/></hierarchy>)");
    script = dir / "fake-adb";
    testsupport::spit(script, "#!/bin/sh\n"
                              "D=\"" + dir.path().string() + "\"\n"
                              "echo \"$@\" >> \"$D/calls.log\"\n"
                              "[ \"$1\" = \"-s\" ] && shift 2\n"
                              "case \"$2\" in\n"
                              "  'wm size') echo 'Physical size: 40x80' ;;\n"
                              "  'screencap -p') cat \"$D/screen.png\" ;;\n"
                              "  'cat /sdcard/window_dump.xml') cat \"$D/dump.xml\" ;;\n"
                              "  'input tap 99 99') echo 'boom' >&2; exit 3 ;;\n"
                              "esac\n");
    ::chmod(script.c_str(), 0755);
  }
  TempDir dir;
  std::filesystem::path script;
};

TEST_F(FakeBridge, DrivesTheBridgeExecutable) {
  BridgeDevice dev({script.string(), "emu-1", 0});
  EXPECT_EQ(dev.screen(), (ScreenSize{40, 80}));
  EXPECT_EQ(dev.capture_screenshot().width(), 40);
  auto root = parse_hierarchy(dev.dump_hierarchy());
  EXPECT_EQ(root.children.at(0).text, "OK");
  auto out = dev.perform(ConcreteAction::tap({10, 10}));
  EXPECT_TRUE(out.settled_at_ms.has_value());
  EXPECT_FALSE(out.state_digest.has_value());
  auto calls = testsupport::slurp(dir / "calls.log");
  EXPECT_NE(calls.find("-s emu-1 shell input tap 10 10"), std::string::npos) << calls;
  EXPECT_THROW(dev.perform(ConcreteAction::tap({50, 10})), PreconditionError);
}

TEST_F(FakeBridge, FailuresBecomeDeviceIoError) {
  testsupport::spit(dir / "dump.xml", "");
  BridgeDevice missing({(dir / "does-not-exist").string(), "", 0});
  EXPECT_THROW(missing.screen(), DeviceIoError);
  testsupport::spit(dir / "screen.png", "not a png");
  BridgeDevice dev({script.string(), "", 0});
  EXPECT_THROW(dev.capture_screenshot(), DeviceIoError);
}
