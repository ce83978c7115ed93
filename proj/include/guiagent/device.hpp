#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "guiagent/hierarchy.hpp"
#include "guiagent/raster.hpp"

namespace guiagent {

class DeviceIoError : public Error {
 public:
  using Error::Error;
};

class ManifestError : public Error {
 public:
  using Error::Error;
};

struct ScreenSize {
  int width = 0;
  int height = 0;
  friend bool operator==(const ScreenSize&, const ScreenSize&) = default;
};

enum class ConcreteKind { Tap, LongPress, Swipe, InputText, Back };
const char* concrete_kind_name(ConcreteKind kind);
ConcreteKind parse_concrete_kind(std::string_view name);

// Device-level action, in screen coordinates.
struct ConcreteAction {
  ConcreteKind kind = ConcreteKind::Tap;
  Point point;  // tap / long press position, swipe start
  Point end;    // swipe end
  int duration_ms = 0;
  std::string text;

  static ConcreteAction tap(Point p);
  static ConcreteAction long_press(Point p, int duration_ms = 800);
  static ConcreteAction swipe(Point from, Point to, int duration_ms = 300);
  static ConcreteAction input_text(std::string text);
  static ConcreteAction back();

  // Throws PreconditionError when coordinates fall outside the screen or a
  // kind-specific field is missing.
  void validate(ScreenSize screen) const;

  friend bool operator==(const ConcreteAction&, const ConcreteAction&) = default;
};

nlohmann::json to_json(const ConcreteAction& a);
ConcreteAction concrete_action_from_json(const nlohmann::json& j);

struct ActionOutcome {
  bool state_changed = false;
  // Simulator only.
  std::optional<std::string> state_digest;
  // Real devices only: wall-clock time the settle delay ended.
  std::optional<std::int64_t> settled_at_ms;
};

class Device {
 public:
  virtual ~Device() = default;
  virtual std::string kind() const = 0;  // "sim" or "adb"
  virtual ScreenSize screen() = 0;
  virtual Raster capture_screenshot() = 0;
  virtual std::string dump_hierarchy() = 0;
  virtual ActionOutcome perform(const ConcreteAction& action) = 0;
  // Content digest of the current state when the device exposes one.
  virtual std::optional<std::string> state_digest() const { return std::nullopt; }
};

// ---------------------------------------------------------------------------
// Simulated app

struct SimElement {
  std::string id;
  std::string class_name = "android.widget.TextView";
  std::string text;  // may reference variables as ${name}
  std::string content_desc;
  Bounds bounds;
  bool clickable = false;
  bool scrollable = false;
  bool long_clickable = false;
  bool enabled = true;
  bool editable = false;
};

struct SimPage {
  std::string id;
  std::vector<SimElement> elements;
};

struct SimEffect {
  std::string key;
  std::string value_template;  // ${name} reads a variable, ${input} the typed text
};

struct SimTransition {
  std::string page;
  std::string element;
  std::string action;  // click | long_press | type | scroll
  std::optional<std::string> direction;
  std::string target_page;
  std::vector<SimEffect> effects;
};

struct SimManifest {
  ScreenSize screen;
  std::string start_page;
  std::vector<SimPage> pages;
  std::vector<SimTransition> transitions;

  const SimPage* find_page(std::string_view id) const;

  // Validates and converts; errors name the offending field path, e.g.
  // "pages[1].elements[0].bounds".
  static SimManifest from_json(const nlohmann::json& doc);
  static SimManifest load(const std::filesystem::path& path);
};

// Applies an anomaly overlay: a JSON list of
//   {op: remove_element|set_text|retarget_transition, page, element, action?, value?}
void apply_overlay(SimManifest& manifest, const nlohmann::json& patches);

struct SimState {
  std::string current_page;
  std::map<std::string, std::string> variables;
  std::vector<std::string> back_stack;
  std::optional<std::string> focused_element;
};

// Digest over page id and variable store.
std::string sim_state_digest(const std::string& page, const std::map<std::string, std::string>& vars);

class SimDevice : public Device {
 public:
  explicit SimDevice(SimManifest manifest);

  std::string kind() const override { return "sim"; }
  ScreenSize screen() override { return manifest_.screen; }
  Raster capture_screenshot() override;
  std::string dump_hierarchy() override;
  ActionOutcome perform(const ConcreteAction& action) override;
  std::optional<std::string> state_digest() const override;

  const SimState& state() const { return state_; }
  const SimManifest& manifest() const { return manifest_; }
  // Element as displayed on the current page, text templates resolved.
  std::vector<SimElement> visible_elements() const;

 private:
  const SimElement* element_at(Point p) const;
  void fire(const SimElement& element, const std::string& action, const std::optional<std::string>& direction,
            const std::string& input);
  std::string resolve(const std::string& tmpl, const std::string& input) const;

  SimManifest manifest_;
  SimState state_;
};

std::unique_ptr<SimDevice> load_sim_app(const std::filesystem::path& manifest,
                                        const std::optional<std::filesystem::path>& overlay = std::nullopt);

// ---------------------------------------------------------------------------
// Real device over the debug bridge

struct BridgeConfig {
  std::string executable = "adb";
  std::string serial;
  int settle_ms = 1500;
};

class BridgeDevice : public Device {
 public:
  explicit BridgeDevice(BridgeConfig config);

  std::string kind() const override { return "adb"; }
  ScreenSize screen() override;
  Raster capture_screenshot() override;
  std::string dump_hierarchy() override;
  ActionOutcome perform(const ConcreteAction& action) override;

  // Shell command line issued on the device for an action, e.g.
  // "input tap 50 25".
  static std::string input_command(const ConcreteAction& action);
  // Escapes text for `input text`: spaces become %s, shell metacharacters
  // are backslash-escaped.
  static std::string escape_input_text(std::string_view text);

 private:
  std::string run(const std::vector<std::string>& args);

  BridgeConfig config_;
  std::optional<ScreenSize> screen_;
};

}  // namespace guiagent
