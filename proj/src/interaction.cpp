#include "guiagent/interaction.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace guiagent {

using nlohmann::json;

namespace {

std::string json_quote(const std::string& s) { return json(s).dump(); }

json parse_reply(const ChatResponse& resp) { return *extract_json_document(resp.text); }

std::string element_table(const std::vector<ElementDescriptor>& elements) {
  std::ostringstream out;
  for (const auto& e : elements) {
    out << "[" << e.marker_id << "] " << e.class_name;
    if (!e.text.empty()) out << " text=" << json_quote(e.text);
    if (!e.content_desc.empty()) out << " content-desc=" << json_quote(e.content_desc);
    out << " function=" << json_quote(e.function_text());
    if (e.flags.editable) out << " editable";
    if (e.flags.scrollable) out << " scrollable";
    out << "\n";
  }
  if (elements.empty()) out << "(no interactive elements)\n";
  return out.str();
}

Message image_message(const Raster& image, std::string text) {
  Message m;
  m.role = Role::User;
  m.parts.emplace_back(ImagePart{encode_png(image), "image/png"});
  m.parts.emplace_back(TextPart{std::move(text)});
  return m;
}

std::string check_string_list(const json& d, const char* key, bool allow_empty) {
  if (!d.contains(key) || !d[key].is_array()) return std::string("'") + key + "' must be a list";
  if (!allow_empty && d[key].empty()) return std::string("'") + key + "' must not be empty";
  for (const auto& s : d[key]) {
    if (!s.is_string() || s.get<std::string>().empty()) return std::string("'") + key + "' entries must be non-empty strings";
  }
  return {};
}

}  // namespace

// ---------------------------------------------------------------------------
// Classification

namespace {

constexpr const char* kClassifierSystem =
    "You read GUI test interaction commands. Decide whether they list specific steps, each mapping to one "
    "action on the screen, or give a concise goal that needs planning. For specific steps, split them into an "
    "ordered list of single-action steps, keeping the original wording.";
constexpr const char* kClassifierSchema = R"({"type": "specific_steps" | "concise", "steps": ["<step>", ...]})";

}  // namespace

CommandClassification classify_commands(const std::string& commands_text, Gateway& gateway) {
  if (commands_text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw ClassificationError("interaction commands are empty");
  }
  ChatRequest req;
  req.agent = "classifier";
  req.structured_mode = true;
  req.schema_hint = kClassifierSchema;
  req.messages.push_back(Message::text(Role::System, kClassifierSystem));
  req.messages.push_back(Message::text(Role::User, "Commands:\n" + commands_text));
  json doc;
  try {
    doc = parse_reply(gateway.chat(req, [](const json& d) -> std::string {
      const std::string type = d.value("type", std::string());
      if (type == "concise") return {};
      if (type != "specific_steps") return "'type' must be \"specific_steps\" or \"concise\"";
      return check_string_list(d, "steps", false);
    }));
  } catch (const MalformedResponseError& e) {
    throw ClassificationError(std::string("cannot classify commands: ") + e.what());
  }
  if (doc["type"] == "concise") return Concise{commands_text};
  SpecificSteps out;
  for (const auto& s : doc["steps"]) {
    out.steps.push_back({s.get<std::string>(), static_cast<int>(out.steps.size())});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Selector

namespace {

constexpr const char* kSelectorSystem =
    "You operate a mobile app. Choose one action for the current step using exactly one of these functions:\n"
    "click(target) taps an element.\n"
    "longPress(target) presses and holds an element.\n"
    "type(target, text) taps an input field and types text into it.\n"
    "scroll(target, direction, distance) swipes inside an element; direction is up, down, left or right, "
    "distance is short, medium or long.\n"
    "The target is the number marked on the element in the screenshot.";
constexpr const char* kSelectorSchema =
    R"({"action": "click" | "longPress" | "type" | "scroll", "target": <marker id>, "text": "<text, type only>", )"
    R"("direction": "<scroll only>", "distance": "<scroll only>"})";

std::string validate_selector_reply(const json& d) {
  static const std::vector<std::string> kActions = {"click", "longPress", "type", "scroll"};
  if (!d.contains("action") || !d["action"].is_string()) return "'action' must be a string";
  const std::string action = d["action"];
  if (std::find(kActions.begin(), kActions.end(), action) == kActions.end()) {
    return "'action' must be one of click, longPress, type, scroll";
  }
  if (!d.contains("target") || !d["target"].is_number_integer()) return "'target' must be an integer marker id";
  if (action == "type" && (!d.contains("text") || !d["text"].is_string() || d["text"].get<std::string>().empty())) {
    return "type needs a non-empty 'text'";
  }
  if (action == "scroll") {
    try {
      parse_direction(d.value("direction", std::string()));
      if (d.contains("distance")) parse_distance(d["distance"].get<std::string>());
    } catch (const std::exception&) {
      return "scroll needs 'direction' (up/down/left/right) and 'distance' (short/medium/long)";
    }
  }
  return {};
}

UiAction action_from_reply(const json& d) {
  const std::string action = d["action"];
  const int target = d["target"].get<int>();
  if (action == "click") return UiAction::click(target);
  if (action == "longPress") return UiAction::long_press(target);
  if (action == "type") return UiAction::type(target, d["text"].get<std::string>());
  return UiAction::scroll(target, parse_direction(d["direction"].get<std::string>()),
                          parse_distance(d.value("distance", std::string("medium"))));
}

std::string marker_list(const Observation& obs) {
  std::string s;
  for (const auto& e : obs.elements) s += (s.empty() ? "" : ", ") + std::to_string(e.marker_id);
  return s.empty() ? "(none)" : s;
}

}  // namespace

ChatRequest build_selector_request(const InteractionCommand& step, const Observation& obs) {
  ChatRequest req;
  req.agent = "selector";
  req.structured_mode = true;
  req.schema_hint = kSelectorSchema;
  req.messages.push_back(Message::text(Role::System, kSelectorSystem));
  std::string body = "Step: " + step.text + "\n";
  if (obs.page_summary) body += "Page: " + *obs.page_summary + "\n";
  body += "Elements:\n" + element_table(obs.elements);
  req.messages.push_back(image_message(obs.annotated_screenshot, std::move(body)));
  return req;
}

Selection select_action(const InteractionCommand& step, const Observation& obs, Gateway& gateway) {
  ChatRequest req = build_selector_request(step, obs);
  auto resp = gateway.chat(req, validate_selector_reply);
  UiAction action = action_from_reply(parse_reply(resp));
  if (obs.find(*action.target) == nullptr) {
    const int bad = *action.target;
    req.messages.push_back(Message::text(Role::Assistant, resp.text));
    req.messages.push_back(Message::text(
        Role::User, "Element [" + std::to_string(bad) + "] is not on this screen. Choose a target from the marked "
                    "elements: " + marker_list(obs) + "."));
    action = action_from_reply(parse_reply(gateway.chat(req, validate_selector_reply)));
    if (obs.find(*action.target) == nullptr) throw SelectorHallucinationError(*action.target);
  }
  Selection sel{action, {}};
  if (action.kind == ActionKind::Type) {
    const auto* e = obs.find(*action.target);
    const bool looks_editable = e->flags.editable || (e->function_hint && *e->function_hint == "text input field");
    if (!looks_editable) {
      sel.warnings.push_back("typing into element [" + std::to_string(e->marker_id) + "], which is not an input field");
    }
  }
  return sel;
}

// ---------------------------------------------------------------------------
// Executor

double distance_fraction(Distance d) {
  switch (d) {
    case Distance::Short: return 0.25;
    case Distance::Medium: return 0.50;
    case Distance::Long: return 0.75;
  }
  return 0.5;
}

std::vector<ConcreteAction> resolve_action(const UiAction& action, const std::vector<ElementDescriptor>& elements,
                                           ScreenSize screen) {
  action.validate();
  if (action.kind == ActionKind::Back) return {ConcreteAction::back()};
  auto it = std::find_if(elements.begin(), elements.end(),
                         [&](const ElementDescriptor& e) { return e.marker_id == *action.target; });
  if (it == elements.end()) {
    throw PreconditionError("action target [" + std::to_string(*action.target) + "] is not in the observation");
  }
  const Bounds& b = it->bounds;
  const Point c = b.center();
  switch (action.kind) {
    case ActionKind::Click: return {ConcreteAction::tap(c)};
    case ActionKind::LongPress: return {ConcreteAction::long_press(c, 800)};
    case ActionKind::Type: return {ConcreteAction::tap(c), ConcreteAction::input_text(action.text)};
    case ActionKind::Scroll: {
      const double f = distance_fraction(*action.distance);
      Point end = c;
      switch (*action.direction) {
        case Direction::Up: end.y = c.y - static_cast<int>(std::lround(f * b.height())); break;
        case Direction::Down: end.y = c.y + static_cast<int>(std::lround(f * b.height())); break;
        case Direction::Left: end.x = c.x - static_cast<int>(std::lround(f * b.width())); break;
        case Direction::Right: end.x = c.x + static_cast<int>(std::lround(f * b.width())); break;
      }
      end.x = std::clamp(end.x, 0, std::max(0, screen.width - 1));
      end.y = std::clamp(end.y, 0, std::max(0, screen.height - 1));
      return {ConcreteAction::swipe(c, end, 400)};
    }
    case ActionKind::Back: break;
  }
  return {ConcreteAction::back()};
}

Execution execute(const UiAction& action, const Observation& obs, Device& device) {
  Execution ex;
  const ScreenSize screen = device.screen();
  ex.concrete = resolve_action(action, obs.elements, screen);
  for (const auto& c : ex.concrete) c.validate(screen);
  for (const auto& c : ex.concrete) {
    ActionOutcome o = device.perform(c);
    ex.outcome.state_changed = ex.outcome.state_changed || o.state_changed;
    ex.outcome.state_digest = o.state_digest;
    ex.outcome.settled_at_ms = o.settled_at_ms;
  }
  return ex;
}

// ---------------------------------------------------------------------------
// Planner / Monitor

namespace {

constexpr const char* kPlannerSystem =
    "You plan GUI interactions on a mobile app. Given a goal, what has been done so far and the current "
    "screen, write the remaining work as an ordered list of specific steps, each one action on the screen.";
constexpr const char* kPlannerSchema = R"({"steps": ["<step>", ...], "rationale": "<why>"})";

constexpr const char* kMonitorSystem =
    "You check progress of GUI interactions on a mobile app. Given a goal, the actions performed so far and the "
    "current screen, decide whether the goal has been completed. If not, describe the current state and the "
    "work that remains.";
constexpr const char* kMonitorSchema =
    R"({"completed": true | false, "state": "<current state>", "remaining": "<remaining work>"})";

std::string numbered(const std::vector<std::string>& lines, const char* empty) {
  if (lines.empty()) return std::string(empty) + "\n";
  std::string s;
  for (std::size_t i = 0; i < lines.size(); ++i) s += std::to_string(i + 1) + ". " + lines[i] + "\n";
  return s;
}

}  // namespace

std::vector<std::string> action_summaries(const InteractionLog& log) {
  std::vector<std::string> out;
  for (const auto& entry : log.entries) {
    if (!entry.executed()) continue;
    const UiAction& a = *entry.action;
    std::string line = action_kind_name(a.kind);
    if (a.target) {
      const auto* e = entry.observation.find(*a.target);
      std::string what = e == nullptr ? "[" + std::to_string(*a.target) + "]" : json_quote(e->function_text());
      if (e != nullptr && !e->text.empty() && e->text != e->function_text()) what += " (" + json_quote(e->text) + ")";
      if (a.kind == ActionKind::Type) line += " " + json_quote(a.text) + " into";
      line += " " + what;
      if (a.kind == ActionKind::Scroll) line += std::string(" ") + direction_name(*a.direction);
    }
    out.push_back(std::move(line));
  }
  return out;
}

ChatRequest build_planner_request(const std::string& command, const std::vector<std::string>& summaries,
                                  const std::string& feedback, const Raster& screenshot) {
  ChatRequest req;
  req.agent = "planner";
  req.structured_mode = true;
  req.schema_hint = kPlannerSchema;
  req.messages.push_back(Message::text(Role::System, kPlannerSystem));
  std::string body = "Goal: " + command + "\nActions performed:\n" + numbered(summaries, "(none)");
  if (!feedback.empty()) body += "Monitor feedback: " + feedback + "\n";
  req.messages.push_back(image_message(screenshot, std::move(body)));
  return req;
}

Plan plan(const std::string& command, const std::vector<std::string>& summaries, const std::string& feedback,
          const Raster& screenshot, Gateway& gateway) {
  auto resp = gateway.chat(build_planner_request(command, summaries, feedback, screenshot),
                           [](const json& d) { return check_string_list(d, "steps", false); });
  json doc = parse_reply(resp);
  Plan p;
  for (const auto& s : doc["steps"]) p.steps.push_back({s.get<std::string>(), static_cast<int>(p.steps.size())});
  if (doc.contains("rationale") && doc["rationale"].is_string()) p.rationale = doc["rationale"];
  return p;
}

ChatRequest build_monitor_request(const std::string& command, const std::vector<std::string>& summaries,
                                  const std::vector<std::string>& failure_notes, const Raster& screenshot) {
  ChatRequest req;
  req.agent = "monitor";
  req.structured_mode = true;
  req.schema_hint = kMonitorSchema;
  req.messages.push_back(Message::text(Role::System, kMonitorSystem));
  std::string body = "Goal: " + command + "\nActions performed:\n" + numbered(summaries, "(none)");
  if (!failure_notes.empty()) body += "Failures:\n" + numbered(failure_notes, "");
  req.messages.push_back(image_message(screenshot, std::move(body)));
  return req;
}

MonitorVerdict monitor(const std::string& command, const InteractionLog& history, const Raster& screenshot,
                       Gateway& gateway, const std::vector<std::string>& failure_notes) {
  json doc;
  try {
    doc = parse_reply(gateway.chat(build_monitor_request(command, action_summaries(history), failure_notes, screenshot),
                                   [](const json& d) -> std::string {
                                     if (!d.contains("completed") || !d["completed"].is_boolean()) {
                                       return "'completed' must be true or false";
                                     }
                                     return {};
                                   }));
  } catch (const MalformedResponseError&) {
    return Feedback{"monitor unavailable"};
  }
  if (doc["completed"].get<bool>()) return Completed{};
  std::string text;
  if (doc.contains("state") && doc["state"].is_string()) text = doc["state"].get<std::string>();
  if (doc.contains("remaining") && doc["remaining"].is_string() && !doc["remaining"].get<std::string>().empty()) {
    text += (text.empty() ? "" : " Remaining: ") + doc["remaining"].get<std::string>();
  }
  return Feedback{text.empty() ? "not completed" : text};
}

// ---------------------------------------------------------------------------
// Runs

namespace {

struct Runner {
  RunContext& ctx;
  LogRecorder recorder;
  InteractionLog log;

  explicit Runner(RunContext& c) : ctx(c), recorder(c.log_dir) {
    log.root = c.log_dir;
    log.device_kind = c.device.kind();
  }

  // Observe, select, execute one step. Returns false when the step failed;
  // the flagged entry is still appended.
  bool step(const InteractionCommand& command) {
    LogEntry entry;
    entry.step_command = command.text;
    entry.pre_state_digest = ctx.device.state_digest();
    Observation obs;
    try {
      obs = ctx.observer.observe(ctx.device);
      entry.observation = recorder.record_observation(obs, entry.pre_state_digest);
      Selection sel = select_action(command, obs, ctx.gateway);
      entry.observation.warnings.insert(entry.observation.warnings.end(), sel.warnings.begin(), sel.warnings.end());
      entry.action = sel.action;
      Execution ex = execute(sel.action, obs, ctx.device);
      entry.concrete_actions = ex.concrete;
      entry.state_changed = ex.outcome.state_changed;
      entry.post_state_digest = ex.outcome.state_digest;
      entry.settled_at_ms = ex.outcome.settled_at_ms;
    } catch (const MalformedResponseError& e) {
      fail(entry, e.what());
    } catch (const SelectorHallucinationError& e) {
      fail(entry, e.what());
    } catch (const DeviceIoError& e) {
      fail(entry, e.what());
    } catch (const PreconditionError& e) {
      fail(entry, e.what());
    } catch (const AnnotationError& e) {
      fail(entry, e.what());
    }
    entry.transcripts = recorder.record_transcripts(ctx.gateway);
    const bool ok = !entry.failed;
    log.entries.push_back(std::move(entry));
    return ok;
  }

  void fail(LogEntry& entry, const std::string& message) {
    entry.failed = true;
    entry.error = message;
    entry.action.reset();
  }

  void record_side_transcripts() {
    auto refs = recorder.record_transcripts(ctx.gateway);
    log.transcripts.insert(log.transcripts.end(), refs.begin(), refs.end());
  }

  void finish() {
    record_side_transcripts();
    Observation obs = ctx.observer.observe(ctx.device);
    log.final_observation = recorder.record_observation(obs, ctx.device.state_digest());
    record_side_transcripts();
    log.usage = ctx.gateway.ledger().totals();
    write_log(log);
  }
};

}  // namespace

InteractionLog run_specific_steps(const std::vector<InteractionCommand>& steps, RunContext& ctx) {
  if (steps.empty()) throw PreconditionError("run_specific_steps needs at least one step");
  Runner r(ctx);
  r.log.pattern = "specific_steps";
  for (const auto& s : steps) r.log.command_text += (r.log.command_text.empty() ? "" : "\n") + s.text;
  r.record_side_transcripts();
  for (const auto& s : steps) {
    if (!r.step(s)) {
      r.log.status = RunStatus::Failed;
      r.log.failed_index = static_cast<int>(r.log.entries.size()) - 1;
      r.log.notes.push_back("step " + std::to_string(s.index + 1) + " failed: " + r.log.entries.back().error);
      break;
    }
  }
  r.finish();
  return r.log;
}

InteractionLog run_concise(const std::string& command, RunContext& ctx, int max_steps) {
  if (max_steps < 1) throw PreconditionError("max_steps must be at least 1");
  Runner r(ctx);
  r.log.pattern = "concise";
  r.log.command_text = command;
  r.record_side_transcripts();

  int consumed = 0;
  std::string feedback;
  std::vector<std::string> failures;
  bool completed = false;
  while (consumed < max_steps) {
    failures.clear();
    Plan p;
    try {
      p = plan(command, action_summaries(r.log), feedback, ctx.device.capture_screenshot(), ctx.gateway);
    } catch (const MalformedResponseError& e) {
      failures.push_back(std::string("planner failed: ") + e.what());
      r.log.notes.push_back(failures.back());
      ++consumed;
    }
    r.record_side_transcripts();
    for (const auto& s : p.steps) {
      if (consumed >= max_steps) break;
      ++consumed;
      if (!r.step(s)) {
        failures.push_back("step " + json_quote(s.text) + " failed: " + r.log.entries.back().error);
        r.log.notes.push_back(failures.back());
        break;
      }
    }
    MonitorVerdict v = monitor(command, r.log, ctx.device.capture_screenshot(), ctx.gateway, failures);
    r.record_side_transcripts();
    if (std::holds_alternative<Completed>(v)) {
      completed = true;
      break;
    }
    feedback = std::get<Feedback>(v).text;
    if (feedback == "monitor unavailable") {
      r.log.notes.push_back("monitor unavailable");
      ++consumed;
    }
  }
  if (!completed) {
    r.log.status = RunStatus::FailedBudget;
    r.log.notes.push_back("step budget of " + std::to_string(max_steps) + " exhausted");
  }
  r.finish();
  return r.log;
}

InteractionLog run_commands(const std::string& commands_text, RunContext& ctx, int max_steps) {
  auto c = classify_commands(commands_text, ctx.gateway);
  if (auto* s = std::get_if<SpecificSteps>(&c)) return run_specific_steps(s->steps, ctx);
  return run_concise(std::get<Concise>(c).command, ctx, max_steps);
}

}  // namespace guiagent
