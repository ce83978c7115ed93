#pragma once

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "guiagent/device.hpp"
#include "guiagent/gateway.hpp"
#include "guiagent/interaction_log.hpp"
#include "guiagent/perception.hpp"

namespace guiagent {

struct InteractionCommand {
  std::string text;
  int index = 0;
  friend bool operator==(const InteractionCommand&, const InteractionCommand&) = default;
};

class ClassificationError : public Error {
 public:
  using Error::Error;
};

struct SpecificSteps {
  std::vector<InteractionCommand> steps;
};
struct Concise {
  std::string command;
};
using CommandClassification = std::variant<SpecificSteps, Concise>;

CommandClassification classify_commands(const std::string& commands_text, Gateway& gateway);

// ---------------------------------------------------------------------------
// Selector

class SelectorHallucinationError : public Error {
 public:
  SelectorHallucinationError(int target)
      : Error("selector chose marker " + std::to_string(target) + ", which is not on screen"), target_(target) {}
  int target() const { return target_; }

 private:
  int target_;
};

struct Selection {
  UiAction action;
  std::vector<std::string> warnings;
};

ChatRequest build_selector_request(const InteractionCommand& step, const Observation& obs);

// A target outside the observation gets exactly one corrective retry before
// SelectorHallucinationError.
Selection select_action(const InteractionCommand& step, const Observation& obs, Gateway& gateway);

// ---------------------------------------------------------------------------
// Executor

// Fraction of the target's extent swept by a scroll.
double distance_fraction(Distance d);

// Coordinates for an action, without touching the device.
std::vector<ConcreteAction> resolve_action(const UiAction& action, const std::vector<ElementDescriptor>& elements,
                                           ScreenSize screen);

struct Execution {
  std::vector<ConcreteAction> concrete;
  ActionOutcome outcome;
};

Execution execute(const UiAction& action, const Observation& obs, Device& device);

// ---------------------------------------------------------------------------
// Planner / Monitor

struct Plan {
  std::vector<InteractionCommand> steps;
  std::string rationale;
};

struct Completed {};
struct Feedback {
  std::string text;
};
using MonitorVerdict = std::variant<Completed, Feedback>;

// One line per executed action: kind plus the target's function text.
std::vector<std::string> action_summaries(const InteractionLog& log);

ChatRequest build_planner_request(const std::string& command, const std::vector<std::string>& summaries,
                                  const std::string& feedback, const Raster& screenshot);
Plan plan(const std::string& command, const std::vector<std::string>& summaries, const std::string& feedback,
          const Raster& screenshot, Gateway& gateway);

ChatRequest build_monitor_request(const std::string& command, const std::vector<std::string>& summaries,
                                  const std::vector<std::string>& failure_notes, const Raster& screenshot);
// A malformed Monitor reply becomes Feedback("monitor unavailable").
MonitorVerdict monitor(const std::string& command, const InteractionLog& history, const Raster& screenshot,
                       Gateway& gateway, const std::vector<std::string>& failure_notes = {});

// ---------------------------------------------------------------------------
// Runs

struct RunContext {
  Device& device;
  Gateway& gateway;
  Observer& observer;
  std::filesystem::path log_dir;
};

constexpr int kDefaultMaxSteps = 15;

InteractionLog run_specific_steps(const std::vector<InteractionCommand>& steps, RunContext& ctx);
InteractionLog run_concise(const std::string& command, RunContext& ctx, int max_steps = kDefaultMaxSteps);

// Classifies the commands and dispatches to one of the two patterns.
InteractionLog run_commands(const std::string& commands_text, RunContext& ctx, int max_steps = kDefaultMaxSteps);

}  // namespace guiagent
