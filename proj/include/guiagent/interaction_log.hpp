#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "guiagent/device.hpp"
#include "guiagent/gateway.hpp"
#include "guiagent/perception.hpp"

namespace guiagent {

enum class ActionKind { Click, LongPress, Type, Scroll, Back };
enum class Direction { Up, Down, Left, Right };
enum class Distance { Short, Medium, Long };

const char* action_kind_name(ActionKind k);
const char* direction_name(Direction d);
const char* distance_name(Distance d);
// Accepts the Selector's names too ("longPress").
ActionKind parse_action_kind(std::string_view name);
Direction parse_direction(std::string_view name);
Distance parse_distance(std::string_view name);

// One action from the Selector's vocabulary (plus back, which only appears in
// evaluation traces).
struct UiAction {
  ActionKind kind = ActionKind::Click;
  std::optional<int> target;
  std::string text;
  std::optional<Direction> direction;
  std::optional<Distance> distance;

  static UiAction click(int target);
  static UiAction long_press(int target);
  static UiAction type(int target, std::string text);
  static UiAction scroll(int target, Direction dir, Distance dist);
  static UiAction back();

  // Kind-specific fields present exactly when required.
  void validate() const;
  std::string describe() const;

  friend bool operator==(const UiAction&, const UiAction&) = default;
};

nlohmann::json to_json(const UiAction& a);
UiAction ui_action_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ElementDescriptor& e);
ElementDescriptor element_from_json(const nlohmann::json& j);

// Observation as persisted: geometry and text, images by relative path.
struct ObservationRecord {
  std::string screenshot;            // relative path, raw capture
  std::string annotated_screenshot;  // relative path, Set-of-Mark overlay
  std::vector<ElementDescriptor> elements;
  std::optional<std::string> page_summary;
  std::vector<std::string> warnings;
  std::optional<std::string> state_digest;

  const ElementDescriptor* find(int marker_id) const;
  friend bool operator==(const ObservationRecord&, const ObservationRecord&) = default;
};

struct TranscriptRef {
  std::string agent;
  std::string file;  // relative path under prompts/
  std::string request_digest;
  friend bool operator==(const TranscriptRef&, const TranscriptRef&) = default;
};

struct LogEntry {
  std::string step_command;
  ObservationRecord observation;
  std::vector<TranscriptRef> transcripts;
  std::optional<UiAction> action;
  std::vector<ConcreteAction> concrete_actions;
  bool state_changed = false;
  std::optional<std::string> pre_state_digest;
  std::optional<std::string> post_state_digest;
  std::optional<std::int64_t> settled_at_ms;
  bool failed = false;
  std::string error;

  bool executed() const { return action.has_value() && !failed; }
  friend bool operator==(const LogEntry&, const LogEntry&) = default;
};

enum class RunStatus { Success, Failed, FailedBudget };
const char* run_status_name(RunStatus s);
RunStatus parse_run_status(std::string_view s);

struct InteractionLog {
  std::string device_kind;
  std::string pattern;  // specific_steps | concise
  std::string command_text;
  std::vector<LogEntry> entries;
  std::optional<ObservationRecord> final_observation;
  RunStatus status = RunStatus::Success;
  std::optional<int> failed_index;
  std::vector<std::string> notes;
  std::vector<TranscriptRef> transcripts;  // calls not tied to an entry
  Usage usage;

  // Directory the relative paths resolve against.
  std::filesystem::path root;

  std::size_t executed_count() const;
  // Observation k for k < entries.size(), the final observation for
  // k == entries.size(). nullptr when absent.
  const ObservationRecord* state(std::size_t k) const;
  std::size_t state_count() const { return entries.size() + (final_observation ? 1 : 0); }
  std::vector<std::uint8_t> read_file(const std::string& relative) const;

  friend bool operator==(const InteractionLog& a, const InteractionLog& b);
};

nlohmann::json to_json(const InteractionLog& log);
InteractionLog interaction_log_from_json(const nlohmann::json& j);

class LogFormatError : public Error {
 public:
  using Error::Error;
};

// Reads <dir>/log.json. Throws LogFormatError on a missing or corrupt file.
InteractionLog read_log(const std::filesystem::path& dir);
void write_log(const InteractionLog& log);

// Writes screenshots and prompt transcripts under a log directory as a run
// progresses:
//   screenshots/NNN.png, screenshots/NNN_som.png, prompts/NNN_<agent>.json
class LogRecorder {
 public:
  explicit LogRecorder(std::filesystem::path dir);

  const std::filesystem::path& dir() const { return dir_; }
  ObservationRecord record_observation(const Observation& obs, std::optional<std::string> state_digest);
  std::vector<TranscriptRef> record_transcripts(Gateway& gateway);

 private:
  std::filesystem::path dir_;
  int screenshot_seq_ = 0;
  int prompt_seq_ = 0;
};

}  // namespace guiagent
