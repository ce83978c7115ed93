#include "guiagent/device.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <regex>
#include <sstream>
#include <thread>

#include "guiagent/digest.hpp"

namespace guiagent {

namespace fs = std::filesystem;
using nlohmann::json;

const char* concrete_kind_name(ConcreteKind kind) {
  switch (kind) {
    case ConcreteKind::Tap: return "tap";
    case ConcreteKind::LongPress: return "long_press";
    case ConcreteKind::Swipe: return "swipe";
    case ConcreteKind::InputText: return "input_text";
    case ConcreteKind::Back: return "back";
  }
  return "tap";
}

ConcreteKind parse_concrete_kind(std::string_view name) {
  for (auto k : {ConcreteKind::Tap, ConcreteKind::LongPress, ConcreteKind::Swipe, ConcreteKind::InputText,
                 ConcreteKind::Back}) {
    if (name == concrete_kind_name(k)) return k;
  }
  throw ParseError("unknown concrete action kind '" + std::string(name) + "'");
}

ConcreteAction ConcreteAction::tap(Point p) { return {ConcreteKind::Tap, p, {}, 0, {}}; }
ConcreteAction ConcreteAction::long_press(Point p, int duration_ms) {
  return {ConcreteKind::LongPress, p, {}, duration_ms, {}};
}
ConcreteAction ConcreteAction::swipe(Point from, Point to, int duration_ms) {
  return {ConcreteKind::Swipe, from, to, duration_ms, {}};
}
ConcreteAction ConcreteAction::input_text(std::string text) {
  return {ConcreteKind::InputText, {}, {}, 0, std::move(text)};
}
ConcreteAction ConcreteAction::back() { return {ConcreteKind::Back, {}, {}, 0, {}}; }

void ConcreteAction::validate(ScreenSize screen) const {
  auto inside = [&](Point p) { return p.x >= 0 && p.y >= 0 && p.x < screen.width && p.y < screen.height; };
  switch (kind) {
    case ConcreteKind::Tap:
      if (!inside(point)) throw PreconditionError("tap outside the screen");
      break;
    case ConcreteKind::LongPress:
      if (!inside(point)) throw PreconditionError("long press outside the screen");
      if (duration_ms <= 0) throw PreconditionError("long press needs a positive duration");
      break;
    case ConcreteKind::Swipe:
      if (!inside(point) || !inside(end)) throw PreconditionError("swipe outside the screen");
      if (duration_ms <= 0) throw PreconditionError("swipe needs a positive duration");
      break;
    case ConcreteKind::InputText:
      if (text.empty()) throw PreconditionError("input_text with empty text");
      break;
    case ConcreteKind::Back:
      break;
  }
}

json to_json(const ConcreteAction& a) {
  json j = {{"kind", concrete_kind_name(a.kind)}};
  switch (a.kind) {
    case ConcreteKind::Tap: j["point"] = {a.point.x, a.point.y}; break;
    case ConcreteKind::LongPress:
      j["point"] = {a.point.x, a.point.y};
      j["duration_ms"] = a.duration_ms;
      break;
    case ConcreteKind::Swipe:
      j["point"] = {a.point.x, a.point.y};
      j["end"] = {a.end.x, a.end.y};
      j["duration_ms"] = a.duration_ms;
      break;
    case ConcreteKind::InputText: j["text"] = a.text; break;
    case ConcreteKind::Back: break;
  }
  return j;
}

ConcreteAction concrete_action_from_json(const json& j) {
  ConcreteAction a;
  a.kind = parse_concrete_kind(j.at("kind").get<std::string>());
  if (j.contains("point")) a.point = {j["point"].at(0).get<int>(), j["point"].at(1).get<int>()};
  if (j.contains("end")) a.end = {j["end"].at(0).get<int>(), j["end"].at(1).get<int>()};
  a.duration_ms = j.value("duration_ms", 0);
  a.text = j.value("text", std::string());
  return a;
}

// ---------------------------------------------------------------------------
// Manifest

namespace {

const json& field(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw ManifestError(path + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ManifestError(path + "." + key + ": missing");
  return *it;
}

std::string str_field(const json& obj, const std::string& key, const std::string& path) {
  const auto& v = field(obj, key, path);
  if (!v.is_string()) throw ManifestError(path + "." + key + ": expected a string");
  return v.get<std::string>();
}

std::string opt_str(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.contains(key)) return {};
  return str_field(obj, key, path);
}

bool opt_bool(const json& obj, const std::string& key, const std::string& path, bool fallback) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_boolean()) throw ManifestError(path + "." + key + ": expected a boolean");
  return obj[key].get<bool>();
}

int positive_int(const json& obj, const std::string& key, const std::string& path) {
  const auto& v = field(obj, key, path);
  if (!v.is_number_integer() || v.get<int>() <= 0) throw ManifestError(path + "." + key + ": expected a positive integer");
  return v.get<int>();
}

const json& array_field(const json& obj, const std::string& key, const std::string& path) {
  const auto& v = field(obj, key, path);
  if (!v.is_array()) throw ManifestError(path + "." + key + ": expected an array");
  return v;
}

const std::array<std::string, 4> kTransitionActions = {"click", "long_press", "type", "scroll"};
const std::array<std::string, 4> kDirections = {"up", "down", "left", "right"};

template <std::size_t N>
bool one_of(const std::string& v, const std::array<std::string, N>& options) {
  return std::find(options.begin(), options.end(), v) != options.end();
}

SimPage* find_page_mut(SimManifest& m, std::string_view id) {
  for (auto& p : m.pages) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

}  // namespace

const SimPage* SimManifest::find_page(std::string_view id) const {
  for (const auto& p : pages) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

SimManifest SimManifest::from_json(const json& doc) {
  SimManifest m;
  const std::string root = "manifest";
  const auto& screen = field(doc, "screen", root);
  m.screen.width = positive_int(screen, "width", root + ".screen");
  m.screen.height = positive_int(screen, "height", root + ".screen");
  m.start_page = str_field(doc, "start_page", root);

  const auto& pages = array_field(doc, "pages", root);
  for (std::size_t i = 0; i < pages.size(); ++i) {
    const std::string pp = "pages[" + std::to_string(i) + "]";
    SimPage page;
    page.id = str_field(pages[i], "id", pp);
    if (page.id.empty()) throw ManifestError(pp + ".id: empty");
    if (m.find_page(page.id) != nullptr) throw ManifestError(pp + ".id: duplicate page '" + page.id + "'");
    const auto& elements = array_field(pages[i], "elements", pp);
    for (std::size_t k = 0; k < elements.size(); ++k) {
      const std::string ep = pp + ".elements[" + std::to_string(k) + "]";
      const auto& e = elements[k];
      SimElement el;
      el.id = str_field(e, "id", ep);
      if (el.id.empty()) throw ManifestError(ep + ".id: empty");
      for (const auto& other : page.elements) {
        if (other.id == el.id) throw ManifestError(ep + ".id: duplicate element '" + el.id + "'");
      }
      if (e.contains("class")) el.class_name = str_field(e, "class", ep);
      el.text = opt_str(e, "text", ep);
      el.content_desc = opt_str(e, "content_desc", ep);
      try {
        el.bounds = parse_bounds(str_field(e, "bounds", ep));
      } catch (const ParseError& err) {
        throw ManifestError(ep + ".bounds: " + err.what());
      }
      if (el.bounds.right > m.screen.width || el.bounds.bottom > m.screen.height) {
        throw ManifestError(ep + ".bounds: outside the screen");
      }
      el.clickable = opt_bool(e, "clickable", ep, false);
      el.scrollable = opt_bool(e, "scrollable", ep, false);
      el.long_clickable = opt_bool(e, "long_clickable", ep, false);
      el.enabled = opt_bool(e, "enabled", ep, true);
      el.editable = opt_bool(e, "editable", ep, el.class_name.find("EditText") != std::string::npos);
      page.elements.push_back(std::move(el));
    }
    m.pages.push_back(std::move(page));
  }
  if (m.find_page(m.start_page) == nullptr) throw ManifestError(root + ".start_page: unknown page '" + m.start_page + "'");

  if (doc.contains("transitions")) {
    const auto& transitions = array_field(doc, "transitions", root);
    for (std::size_t i = 0; i < transitions.size(); ++i) {
      const std::string tp = "transitions[" + std::to_string(i) + "]";
      const auto& t = transitions[i];
      SimTransition tr;
      tr.page = str_field(t, "page", tp);
      tr.element = str_field(t, "element", tp);
      tr.action = str_field(t, "action", tp);
      tr.target_page = str_field(t, "target_page", tp);
      const SimPage* page = m.find_page(tr.page);
      if (page == nullptr) throw ManifestError(tp + ".page: unknown page '" + tr.page + "'");
      bool found = std::any_of(page->elements.begin(), page->elements.end(),
                               [&](const SimElement& e) { return e.id == tr.element; });
      if (!found) throw ManifestError(tp + ".element: no element '" + tr.element + "' on page '" + tr.page + "'");
      if (!one_of(tr.action, kTransitionActions)) throw ManifestError(tp + ".action: unknown action '" + tr.action + "'");
      if (t.contains("direction")) {
        tr.direction = str_field(t, "direction", tp);
        if (!one_of(*tr.direction, kDirections)) throw ManifestError(tp + ".direction: unknown direction");
      }
      if (m.find_page(tr.target_page) == nullptr) {
        throw ManifestError(tp + ".target_page: unknown page '" + tr.target_page + "'");
      }
      if (t.contains("effects")) {
        const auto& effects = array_field(t, "effects", tp);
        for (std::size_t k = 0; k < effects.size(); ++k) {
          const std::string fp = tp + ".effects[" + std::to_string(k) + "]";
          tr.effects.push_back({str_field(effects[k], "set", fp), str_field(effects[k], "to", fp)});
        }
      }
      m.transitions.push_back(std::move(tr));
    }
  }
  return m;
}

SimManifest SimManifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot read manifest " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ManifestError("manifest " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(doc);
}

void apply_overlay(SimManifest& m, const json& patches) {
  if (!patches.is_array()) throw ManifestError("overlay: expected a list of patches");
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const std::string pp = "overlay[" + std::to_string(i) + "]";
    const auto& patch = patches[i];
    const std::string op = str_field(patch, "op", pp);
    const std::string page_id = str_field(patch, "page", pp);
    const std::string element_id = str_field(patch, "element", pp);
    SimPage* page = find_page_mut(m, page_id);
    if (page == nullptr) throw ManifestError(pp + ".page: unknown page '" + page_id + "'");
    auto el = std::find_if(page->elements.begin(), page->elements.end(),
                           [&](const SimElement& e) { return e.id == element_id; });
    if (el == page->elements.end()) {
      throw ManifestError(pp + ".element: no element '" + element_id + "' on page '" + page_id + "'");
    }
    if (op == "remove_element") {
      page->elements.erase(el);
      std::erase_if(m.transitions,
                    [&](const SimTransition& t) { return t.page == page_id && t.element == element_id; });
    } else if (op == "set_text") {
      el->text = str_field(patch, "value", pp);
    } else if (op == "retarget_transition") {
      const std::string target = str_field(patch, "value", pp);
      if (m.find_page(target) == nullptr) throw ManifestError(pp + ".value: unknown page '" + target + "'");
      const std::string action = opt_str(patch, "action", pp);
      int hits = 0;
      for (auto& t : m.transitions) {
        if (t.page == page_id && t.element == element_id && (action.empty() || t.action == action)) {
          t.target_page = target;
          ++hits;
        }
      }
      if (hits == 0) throw ManifestError(pp + ": no transition from '" + page_id + "/" + element_id + "'");
    } else {
      throw ManifestError(pp + ".op: unknown op '" + op + "'");
    }
  }
}

// ---------------------------------------------------------------------------
// Simulator

std::string sim_state_digest(const std::string& page, const std::map<std::string, std::string>& vars) {
  DigestBuilder d;
  d.field("sim-state/v1").field(page);
  for (const auto& [k, v] : vars) d.field(k).field(v);
  return d.hex();
}

SimDevice::SimDevice(SimManifest manifest) : manifest_(std::move(manifest)) {
  state_.current_page = manifest_.start_page;
}

std::optional<std::string> SimDevice::state_digest() const {
  return sim_state_digest(state_.current_page, state_.variables);
}

std::string SimDevice::resolve(const std::string& tmpl, const std::string& input) const {
  std::string out;
  std::size_t pos = 0;
  while (pos < tmpl.size()) {
    auto open = tmpl.find("${", pos);
    if (open == std::string::npos) break;
    auto close = tmpl.find('}', open);
    if (close == std::string::npos) break;
    out.append(tmpl, pos, open - pos);
    std::string name = tmpl.substr(open + 2, close - open - 2);
    if (name == "input") {
      out += input;
    } else if (auto it = state_.variables.find(name); it != state_.variables.end()) {
      out += it->second;
    }
    pos = close + 1;
  }
  out.append(tmpl, pos, std::string::npos);
  return out;
}

std::vector<SimElement> SimDevice::visible_elements() const {
  const SimPage* page = manifest_.find_page(state_.current_page);
  std::vector<SimElement> out = page->elements;
  for (auto& e : out) {
    auto typed = state_.variables.find(e.id);
    if (e.editable && typed != state_.variables.end()) {
      e.text = typed->second;
    } else {
      e.text = resolve(e.text, "");
    }
  }
  return out;
}

const SimElement* SimDevice::element_at(Point p) const {
  const SimPage* page = manifest_.find_page(state_.current_page);
  const SimElement* best = nullptr;
  for (const auto& e : page->elements) {
    if (!e.bounds.contains(p)) continue;
    if (best == nullptr || e.bounds.area() <= best->bounds.area()) best = &e;
  }
  return best;
}

void SimDevice::fire(const SimElement& element, const std::string& action,
                     const std::optional<std::string>& direction, const std::string& input) {
  for (const auto& t : manifest_.transitions) {
    if (t.page != state_.current_page || t.element != element.id || t.action != action) continue;
    if (t.direction && direction && *t.direction != *direction) continue;
    for (const auto& effect : t.effects) state_.variables[effect.key] = resolve(effect.value_template, input);
    if (t.target_page != state_.current_page) {
      state_.back_stack.push_back(state_.current_page);
      state_.current_page = t.target_page;
      state_.focused_element.reset();
    }
    return;
  }
}

ActionOutcome SimDevice::perform(const ConcreteAction& action) {
  action.validate(manifest_.screen);
  const std::string before = *state_digest();
  switch (action.kind) {
    case ConcreteKind::Tap:
      if (const SimElement* e = element_at(action.point)) {
        if (e->editable) state_.focused_element = e->id;
        SimElement hit = *e;
        fire(hit, "click", std::nullopt, "");
      }
      break;
    case ConcreteKind::LongPress:
      if (const SimElement* e = element_at(action.point)) {
        SimElement hit = *e;
        fire(hit, "long_press", std::nullopt, "");
      }
      break;
    case ConcreteKind::Swipe:
      if (const SimElement* e = element_at(action.point)) {
        int dx = action.end.x - action.point.x;
        int dy = action.end.y - action.point.y;
        if (dx == 0 && dy == 0) break;
        std::string dir = std::abs(dy) >= std::abs(dx) ? (dy < 0 ? "up" : "down") : (dx < 0 ? "left" : "right");
        SimElement hit = *e;
        fire(hit, "scroll", dir, "");
      }
      break;
    case ConcreteKind::InputText:
      if (state_.focused_element) {
        const SimPage* page = manifest_.find_page(state_.current_page);
        auto it = std::find_if(page->elements.begin(), page->elements.end(),
                               [&](const SimElement& e) { return e.id == *state_.focused_element; });
        if (it != page->elements.end()) {
          SimElement hit = *it;
          state_.variables[hit.id] = action.text;
          fire(hit, "type", std::nullopt, action.text);
        }
      }
      break;
    case ConcreteKind::Back:
      if (!state_.back_stack.empty()) {
        state_.current_page = state_.back_stack.back();
        state_.back_stack.pop_back();
        state_.focused_element.reset();
      }
      break;
  }
  ActionOutcome out;
  out.state_digest = state_digest();
  out.state_changed = *out.state_digest != before;
  return out;
}

Raster SimDevice::capture_screenshot() {
  constexpr Rgb kBackground{246, 246, 246};
  constexpr Rgb kBorder{90, 90, 90};
  constexpr Rgb kInk{30, 30, 30};
  constexpr int kScale = 3;
  Raster img(manifest_.screen.width, manifest_.screen.height, kBackground);
  for (const auto& e : visible_elements()) {
    const Bounds& b = e.bounds;
    Rgb fill = e.editable ? Rgb{255, 255, 255} : e.clickable ? Rgb{225, 233, 248} : Rgb{238, 238, 238};
    img.fill_rect(b.left, b.top, b.right, b.bottom, fill);
    img.stroke_rect(b.left, b.top, b.right, b.bottom, 2, kBorder);
    if (!e.text.empty()) {
      int room = std::max(0, (b.width() - 24 + kScale) / (6 * kScale));
      std::string shown = e.text.substr(0, static_cast<std::size_t>(room));
      int y = b.top + (b.height() - kGlyphHeight * kScale) / 2;
      img.draw_text(b.left + 12, y, shown, kScale, kInk);
    } else if (!e.content_desc.empty()) {
      // Text-less icon: a solid glyph over the middle half.
      img.fill_rect(b.left + b.width() / 4, b.top + b.height() / 4, b.right - b.width() / 4,
                    b.bottom - b.height() / 4, Rgb{60, 60, 60});
    }
  }
  return img;
}

std::string SimDevice::dump_hierarchy() {
  std::vector<UiNode> nodes;
  for (const auto& e : visible_elements()) {
    UiNode n;
    n.class_name = e.class_name;
    n.text = e.text;
    n.content_desc = e.content_desc;
    n.resource_id = e.id;
    n.bounds = e.bounds;
    n.flags = {e.clickable, e.enabled, e.scrollable, e.long_clickable, e.editable};
    nodes.push_back(std::move(n));
  }
  return write_hierarchy(nodes, "sim." + manifest_.start_page);
}

std::unique_ptr<SimDevice> load_sim_app(const fs::path& manifest, const std::optional<fs::path>& overlay) {
  SimManifest m = SimManifest::load(manifest);
  if (overlay) {
    std::ifstream in(*overlay);
    if (!in) throw ManifestError("cannot read overlay " + overlay->string());
    json patches;
    try {
      in >> patches;
    } catch (const json::exception& e) {
      throw ManifestError("overlay " + overlay->string() + " is not valid JSON: " + e.what());
    }
    apply_overlay(m, patches);
  }
  return std::make_unique<SimDevice>(std::move(m));
}

// ---------------------------------------------------------------------------
// Debug bridge

namespace {

std::string shell_quote(const std::string& arg) {
  std::string out = "'";
  for (char c : arg) {
    if (c == '\'') out += "'\\''";
    else out.push_back(c);
  }
  out += "'";
  return out;
}

}  // namespace

BridgeDevice::BridgeDevice(BridgeConfig config) : config_(std::move(config)) {}

std::string BridgeDevice::run(const std::vector<std::string>& args) {
  std::string cmd = shell_quote(config_.executable);
  if (!config_.serial.empty()) cmd += " -s " + shell_quote(config_.serial);
  for (const auto& a : args) cmd += " " + shell_quote(a);
  cmd += " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (pipe == nullptr) throw DeviceIoError("cannot launch " + config_.executable);
  std::string out;
  std::array<char, 65536> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), n);
  int status = ::pclose(pipe);
  if (status != 0) {
    throw DeviceIoError("bridge command failed (" + std::to_string(status) + "): " + cmd + ": " + out.substr(0, 300));
  }
  return out;
}

ScreenSize BridgeDevice::screen() {
  if (screen_) return *screen_;
  std::string out = run({"shell", "wm size"});
  std::smatch m;
  static const std::regex override_re(R"(Override size:\s*(\d+)x(\d+))");
  static const std::regex physical_re(R"(Physical size:\s*(\d+)x(\d+))");
  if (std::regex_search(out, m, override_re) || std::regex_search(out, m, physical_re)) {
    screen_ = ScreenSize{std::stoi(m[1]), std::stoi(m[2])};
    return *screen_;
  }
  throw DeviceIoError("cannot read screen size from: " + out.substr(0, 200));
}

Raster BridgeDevice::capture_screenshot() {
  std::string png = run({"exec-out", "screencap -p"});
  try {
    return decode_png(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(png.data()), png.size()));
  } catch (const ImageError& e) {
    throw DeviceIoError(std::string("screenshot is not a PNG: ") + e.what());
  }
}

std::string BridgeDevice::dump_hierarchy() {
  run({"shell", "uiautomator dump /sdcard/window_dump.xml"});
  return run({"exec-out", "cat /sdcard/window_dump.xml"});
}

std::string BridgeDevice::escape_input_text(std::string_view text) {
  static constexpr std::string_view kSpecial = "\\\"'()<>|;&*~$!?#`{}[]";
  std::string out;
  for (char c : text) {
    if (c == ' ') {
      out += "%s";
    } else {
      if (kSpecial.find(c) != std::string_view::npos) out.push_back('\\');
      out.push_back(c);
    }
  }
  return out;
}

std::string BridgeDevice::input_command(const ConcreteAction& a) {
  auto xy = [](Point p) { return std::to_string(p.x) + " " + std::to_string(p.y); };
  switch (a.kind) {
    case ConcreteKind::Tap: return "input tap " + xy(a.point);
    case ConcreteKind::LongPress:
      return "input swipe " + xy(a.point) + " " + xy(a.point) + " " + std::to_string(a.duration_ms);
    case ConcreteKind::Swipe:
      return "input swipe " + xy(a.point) + " " + xy(a.end) + " " + std::to_string(a.duration_ms);
    case ConcreteKind::InputText: return "input text " + escape_input_text(a.text);
    case ConcreteKind::Back: return "input keyevent 4";
  }
  return {};
}

ActionOutcome BridgeDevice::perform(const ConcreteAction& action) {
  action.validate(screen());
  run({"shell", input_command(action)});
  std::this_thread::sleep_for(std::chrono::milliseconds(config_.settle_ms));
  ActionOutcome out;
  out.state_changed = true;
  out.settled_at_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::system_clock::now().time_since_epoch())
                          .count();
  return out;
}

}  // namespace guiagent
