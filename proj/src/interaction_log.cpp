#include "guiagent/interaction_log.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace guiagent {

namespace fs = std::filesystem;
using nlohmann::json;

const char* action_kind_name(ActionKind k) {
  switch (k) {
    case ActionKind::Click: return "click";
    case ActionKind::LongPress: return "long_press";
    case ActionKind::Type: return "type";
    case ActionKind::Scroll: return "scroll";
    case ActionKind::Back: return "back";
  }
  return "click";
}

const char* direction_name(Direction d) {
  switch (d) {
    case Direction::Up: return "up";
    case Direction::Down: return "down";
    case Direction::Left: return "left";
    case Direction::Right: return "right";
  }
  return "up";
}

const char* distance_name(Distance d) {
  switch (d) {
    case Distance::Short: return "short";
    case Distance::Medium: return "medium";
    case Distance::Long: return "long";
  }
  return "medium";
}

ActionKind parse_action_kind(std::string_view name) {
  if (name == "click") return ActionKind::Click;
  if (name == "long_press" || name == "longPress") return ActionKind::LongPress;
  if (name == "type") return ActionKind::Type;
  if (name == "scroll") return ActionKind::Scroll;
  if (name == "back") return ActionKind::Back;
  throw ParseError("unknown action '" + std::string(name) + "'");
}

Direction parse_direction(std::string_view name) {
  if (name == "up") return Direction::Up;
  if (name == "down") return Direction::Down;
  if (name == "left") return Direction::Left;
  if (name == "right") return Direction::Right;
  throw ParseError("unknown direction '" + std::string(name) + "'");
}

Distance parse_distance(std::string_view name) {
  if (name == "short") return Distance::Short;
  if (name == "medium") return Distance::Medium;
  if (name == "long") return Distance::Long;
  throw ParseError("unknown distance '" + std::string(name) + "'");
}

UiAction UiAction::click(int target) { return {ActionKind::Click, target, {}, {}, {}}; }
UiAction UiAction::long_press(int target) { return {ActionKind::LongPress, target, {}, {}, {}}; }
UiAction UiAction::type(int target, std::string text) { return {ActionKind::Type, target, std::move(text), {}, {}}; }
UiAction UiAction::scroll(int target, Direction dir, Distance dist) {
  return {ActionKind::Scroll, target, {}, dir, dist};
}
UiAction UiAction::back() { return {ActionKind::Back, {}, {}, {}, {}}; }

void UiAction::validate() const {
  const bool needs_target = kind != ActionKind::Back;
  if (needs_target != target.has_value()) {
    throw PreconditionError(std::string(action_kind_name(kind)) + (needs_target ? " requires" : " takes no") + " target");
  }
  if ((kind == ActionKind::Type) != !text.empty()) {
    throw PreconditionError(kind == ActionKind::Type ? "type requires non-empty text" : "only type carries text");
  }
  const bool is_scroll = kind == ActionKind::Scroll;
  if (is_scroll != direction.has_value() || is_scroll != distance.has_value()) {
    throw PreconditionError(is_scroll ? "scroll requires direction and distance" : "only scroll carries direction/distance");
  }
}

std::string UiAction::describe() const {
  std::string s = action_kind_name(kind);
  if (kind == ActionKind::Back) return s;
  s += "(" + std::to_string(target.value_or(0));
  if (kind == ActionKind::Type) s += ", \"" + text + "\"";
  if (kind == ActionKind::Scroll) {
    s += std::string(", ") + direction_name(*direction) + ", " + distance_name(*distance);
  }
  return s + ")";
}

json to_json(const UiAction& a) {
  json j = {{"kind", action_kind_name(a.kind)}};
  if (a.target) j["target"] = *a.target;
  if (!a.text.empty()) j["text"] = a.text;
  if (a.direction) j["direction"] = direction_name(*a.direction);
  if (a.distance) j["distance"] = distance_name(*a.distance);
  return j;
}

UiAction ui_action_from_json(const json& j) {
  UiAction a;
  a.kind = parse_action_kind(j.at("kind").get<std::string>());
  if (j.contains("target")) a.target = j["target"].get<int>();
  a.text = j.value("text", std::string());
  if (j.contains("direction")) a.direction = parse_direction(j["direction"].get<std::string>());
  if (j.contains("distance")) a.distance = parse_distance(j["distance"].get<std::string>());
  return a;
}

json to_json(const ElementDescriptor& e) {
  json j = {{"marker_id", e.marker_id},
            {"bounds", format_bounds(e.bounds)},
            {"text", e.text},
            {"content_desc", e.content_desc},
            {"class", e.class_name},
            {"resource_id", e.resource_id},
            {"flags",
             {{"clickable", e.flags.clickable},
              {"enabled", e.flags.enabled},
              {"scrollable", e.flags.scrollable},
              {"long_clickable", e.flags.long_clickable},
              {"editable", e.flags.editable}}},
            {"source", element_source_name(e.source)}};
  if (e.function_hint) j["function_hint"] = *e.function_hint;
  if (e.inferred_function) j["inferred_function"] = *e.inferred_function;
  return j;
}

ElementDescriptor element_from_json(const json& j) {
  ElementDescriptor e;
  e.marker_id = j.at("marker_id").get<int>();
  e.bounds = parse_bounds(j.at("bounds").get<std::string>());
  e.text = j.value("text", std::string());
  e.content_desc = j.value("content_desc", std::string());
  e.class_name = j.value("class", std::string());
  e.resource_id = j.value("resource_id", std::string());
  if (j.contains("flags")) {
    const auto& f = j["flags"];
    e.flags = {f.value("clickable", false), f.value("enabled", false), f.value("scrollable", false),
               f.value("long_clickable", false), f.value("editable", false)};
  }
  e.source = parse_element_source(j.value("source", std::string("hierarchy")));
  if (j.contains("function_hint")) e.function_hint = j["function_hint"].get<std::string>();
  if (j.contains("inferred_function")) e.inferred_function = j["inferred_function"].get<std::string>();
  return e;
}

const ElementDescriptor* ObservationRecord::find(int marker_id) const {
  for (const auto& e : elements) {
    if (e.marker_id == marker_id) return &e;
  }
  return nullptr;
}

const char* run_status_name(RunStatus s) {
  switch (s) {
    case RunStatus::Success: return "success";
    case RunStatus::Failed: return "failed";
    case RunStatus::FailedBudget: return "failed:budget";
  }
  return "failed";
}

RunStatus parse_run_status(std::string_view s) {
  if (s == "success") return RunStatus::Success;
  if (s == "failed") return RunStatus::Failed;
  if (s == "failed:budget") return RunStatus::FailedBudget;
  throw ParseError("unknown run status '" + std::string(s) + "'");
}

std::size_t InteractionLog::executed_count() const {
  std::size_t n = 0;
  for (const auto& e : entries) n += e.executed() ? 1 : 0;
  return n;
}

const ObservationRecord* InteractionLog::state(std::size_t k) const {
  if (k < entries.size()) return &entries[k].observation;
  if (k == entries.size() && final_observation) return &*final_observation;
  return nullptr;
}

std::vector<std::uint8_t> InteractionLog::read_file(const std::string& relative) const {
  std::ifstream in(root / relative, std::ios::binary);
  if (!in) throw LogFormatError("log artifact missing: " + (root / relative).string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool operator==(const InteractionLog& a, const InteractionLog& b) {
  return a.device_kind == b.device_kind && a.pattern == b.pattern && a.command_text == b.command_text &&
         a.entries == b.entries && a.final_observation == b.final_observation && a.status == b.status &&
         a.failed_index == b.failed_index && a.notes == b.notes && a.transcripts == b.transcripts &&
         a.usage == b.usage;
}

namespace {

json opt(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

std::optional<std::string> opt_string(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<std::string>();
}

json to_json(const ObservationRecord& o) {
  json elements = json::array();
  for (const auto& e : o.elements) elements.push_back(to_json(e));
  return {{"screenshot", o.screenshot},
          {"annotated_screenshot", o.annotated_screenshot},
          {"elements", std::move(elements)},
          {"page_summary", opt(o.page_summary)},
          {"warnings", o.warnings},
          {"state_digest", opt(o.state_digest)}};
}

ObservationRecord observation_from_json(const json& j) {
  ObservationRecord o;
  o.screenshot = j.value("screenshot", std::string());
  o.annotated_screenshot = j.value("annotated_screenshot", std::string());
  for (const auto& e : j.value("elements", json::array())) o.elements.push_back(element_from_json(e));
  o.page_summary = opt_string(j, "page_summary");
  o.warnings = j.value("warnings", std::vector<std::string>());
  o.state_digest = opt_string(j, "state_digest");
  return o;
}

json to_json(const TranscriptRef& t) {
  return {{"agent", t.agent}, {"file", t.file}, {"request_digest", t.request_digest}};
}

TranscriptRef transcript_from_json(const json& j) {
  return {j.at("agent").get<std::string>(), j.at("file").get<std::string>(),
          j.value("request_digest", std::string())};
}

}  // namespace

json to_json(const InteractionLog& log) {
  json entries = json::array();
  for (std::size_t i = 0; i < log.entries.size(); ++i) {
    const auto& e = log.entries[i];
    json concrete = json::array();
    for (const auto& c : e.concrete_actions) concrete.push_back(to_json(c));
    json transcripts = json::array();
    for (const auto& t : e.transcripts) transcripts.push_back(to_json(t));
    json entry = {{"index", i},
                  {"step_command", e.step_command},
                  {"observation", to_json(e.observation)},
                  {"transcripts", std::move(transcripts)},
                  {"action", e.action ? to_json(*e.action) : json(nullptr)},
                  {"concrete_actions", std::move(concrete)},
                  {"state_changed", e.state_changed},
                  {"pre_state_digest", opt(e.pre_state_digest)},
                  {"post_state_digest", opt(e.post_state_digest)},
                  {"settled_at_ms", e.settled_at_ms ? json(*e.settled_at_ms) : json(nullptr)},
                  {"failed", e.failed},
                  {"error", e.error}};
    entries.push_back(std::move(entry));
  }
  json transcripts = json::array();
  for (const auto& t : log.transcripts) transcripts.push_back(to_json(t));
  return {{"format", "interaction-log/v1"},
          {"device_kind", log.device_kind},
          {"pattern", log.pattern},
          {"command_text", log.command_text},
          {"status", run_status_name(log.status)},
          {"failed_index", log.failed_index ? json(*log.failed_index) : json(nullptr)},
          {"entries", std::move(entries)},
          {"final_observation", log.final_observation ? to_json(*log.final_observation) : json(nullptr)},
          {"notes", log.notes},
          {"transcripts", std::move(transcripts)},
          {"usage", {{"prompt_tokens", log.usage.prompt_tokens}, {"completion_tokens", log.usage.completion_tokens}}}};
}

InteractionLog interaction_log_from_json(const json& j) {
  InteractionLog log;
  log.device_kind = j.value("device_kind", std::string());
  log.pattern = j.value("pattern", std::string());
  log.command_text = j.value("command_text", std::string());
  log.status = parse_run_status(j.value("status", std::string("success")));
  if (j.contains("failed_index") && !j["failed_index"].is_null()) log.failed_index = j["failed_index"].get<int>();
  for (const auto& je : j.at("entries")) {
    LogEntry e;
    e.step_command = je.value("step_command", std::string());
    if (je.contains("observation")) e.observation = observation_from_json(je["observation"]);
    for (const auto& t : je.value("transcripts", json::array())) e.transcripts.push_back(transcript_from_json(t));
    if (je.contains("action") && !je["action"].is_null()) e.action = ui_action_from_json(je["action"]);
    for (const auto& c : je.value("concrete_actions", json::array())) {
      e.concrete_actions.push_back(concrete_action_from_json(c));
    }
    e.state_changed = je.value("state_changed", false);
    e.pre_state_digest = opt_string(je, "pre_state_digest");
    e.post_state_digest = opt_string(je, "post_state_digest");
    if (je.contains("settled_at_ms") && !je["settled_at_ms"].is_null()) {
      e.settled_at_ms = je["settled_at_ms"].get<std::int64_t>();
    }
    e.failed = je.value("failed", false);
    e.error = je.value("error", std::string());
    log.entries.push_back(std::move(e));
  }
  if (j.contains("final_observation") && !j["final_observation"].is_null()) {
    log.final_observation = observation_from_json(j["final_observation"]);
  }
  log.notes = j.value("notes", std::vector<std::string>());
  for (const auto& t : j.value("transcripts", json::array())) log.transcripts.push_back(transcript_from_json(t));
  if (j.contains("usage")) {
    log.usage.prompt_tokens = j["usage"].value("prompt_tokens", std::int64_t{0});
    log.usage.completion_tokens = j["usage"].value("completion_tokens", std::int64_t{0});
  }
  return log;
}

InteractionLog read_log(const fs::path& dir) {
  const fs::path file = dir / "log.json";
  std::ifstream in(file);
  if (!in) throw LogFormatError("missing " + file.string());
  try {
    json doc;
    in >> doc;
    InteractionLog log = interaction_log_from_json(doc);
    log.root = dir;
    return log;
  } catch (const json::exception& e) {
    throw LogFormatError("corrupt " + file.string() + ": " + e.what());
  } catch (const ParseError& e) {
    throw LogFormatError("corrupt " + file.string() + ": " + e.what());
  }
}

void write_log(const InteractionLog& log) {
  fs::create_directories(log.root);
  std::ofstream out(log.root / "log.json");
  out << to_json(log).dump(2) << '\n';
  if (!out) throw Error("cannot write " + (log.root / "log.json").string());
}

// ---------------------------------------------------------------------------

namespace {

std::string seq_name(int n) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03d", n);
  return buf;
}

void write_bytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("cannot write " + path.string());
}

}  // namespace

LogRecorder::LogRecorder(fs::path dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_ / "screenshots");
  fs::create_directories(dir_ / "prompts");
}

ObservationRecord LogRecorder::record_observation(const Observation& obs, std::optional<std::string> state_digest) {
  const std::string n = seq_name(screenshot_seq_++);
  ObservationRecord rec;
  rec.screenshot = "screenshots/" + n + ".png";
  rec.annotated_screenshot = "screenshots/" + n + "_som.png";
  write_bytes(dir_ / rec.screenshot, encode_png(obs.screenshot));
  write_bytes(dir_ / rec.annotated_screenshot, encode_png(obs.annotated_screenshot));
  rec.elements = obs.elements;
  rec.page_summary = obs.page_summary;
  rec.warnings = obs.warnings;
  rec.state_digest = std::move(state_digest);
  return rec;
}

std::vector<TranscriptRef> LogRecorder::record_transcripts(Gateway& gateway) {
  std::vector<TranscriptRef> refs;
  for (auto& t : gateway.drain_transcripts()) {
    TranscriptRef ref{t.agent, "prompts/" + seq_name(prompt_seq_++) + "_" + t.agent + ".json", t.request_digest};
    json doc = {{"agent", t.agent},
                {"request_digest", t.request_digest},
                {"prompt", t.prompt_text},
                {"response", t.response_text},
                {"usage", {{"prompt_tokens", t.usage.prompt_tokens}, {"completion_tokens", t.usage.completion_tokens}}}};
    std::ofstream out(dir_ / ref.file);
    out << doc.dump(2) << '\n';
    refs.push_back(std::move(ref));
  }
  return refs;
}

}  // namespace guiagent
