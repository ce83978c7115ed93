#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "guiagent/interaction_log.hpp"

namespace guiagent {

// Equal iff kind, target_key, text (type) and direction (scroll) match.
// Scroll distance is carried but ignored.
struct CanonicalAction {
  ActionKind kind = ActionKind::Click;
  std::string target_key;
  std::string text;
  std::optional<Direction> direction;
  std::optional<Distance> distance;

  static CanonicalAction click(std::string key);
  static CanonicalAction long_press(std::string key);
  static CanonicalAction type(std::string key, std::string text);
  static CanonicalAction scroll(std::string key, Direction dir, Distance dist = Distance::Medium);
  static CanonicalAction back();

  // Normal form used for equality and hashing.
  std::string identity() const;
  std::string describe() const;

  friend bool operator==(const CanonicalAction& a, const CanonicalAction& b) { return a.identity() == b.identity(); }
};

constexpr int kCenterBucketPx = 24;

// Identity of an element on a real device: class, text (or content
// description) and the bucketed center.
std::string real_target_key(const std::string& class_name, const std::string& text_or_desc, Point center,
                            int bucket = kCenterBucketPx);

enum class Provenance { Manual, Tool };

struct ActionTrace {
  std::string task_id;
  Provenance provenance = Provenance::Tool;
  std::vector<CanonicalAction> actions;
};

struct StateDigests {
  std::string pre;
  std::string post;
};

// Trace_P. `digests`, when given, has one entry per action.
std::vector<CanonicalAction> filter_trace(const std::vector<CanonicalAction>& trace,
                                          const std::vector<StateDigests>* digests = nullptr);

int task_completion(const std::vector<CanonicalAction>& trace_p, const std::vector<CanonicalAction>& ground_truth);
double correct_step(const std::vector<CanonicalAction>& raw, const std::vector<CanonicalAction>& ground_truth);
double correct_trace(const std::vector<CanonicalAction>& raw, const std::vector<CanonicalAction>& ground_truth);
double step_efficiency(const std::vector<CanonicalAction>& raw, const std::vector<CanonicalAction>& trace_p, int tc);

struct TraceMetrics {
  int tc = 0;
  double cs = 0.0;
  double ct = 0.0;
  double se = 0.0;
  std::size_t filtered_length = 0;
  std::size_t raw_length = 0;
};

TraceMetrics compute_metrics(const std::vector<CanonicalAction>& raw, const std::vector<CanonicalAction>& ground_truth,
                             const std::vector<StateDigests>* digests = nullptr);

struct DifficultyRating {
  int step_ideal = 0;
  double score_vag = 0.0;
};

DifficultyRating difficulty(const std::vector<CanonicalAction>& ground_truth, int command_count);

// ---------------------------------------------------------------------------
// Files

struct GroundTruth {
  std::string task_id;
  std::string level;  // L1 | L2 | L3
  int command_count = 1;
  std::vector<CanonicalAction> actions;
};

nlohmann::json to_json(const CanonicalAction& a);
// Target as {"target": key} or {"element": {class, text|content_desc, center: [x, y]}}.
CanonicalAction canonical_action_from_json(const nlohmann::json& j);
GroundTruth ground_truth_from_json(const nlohmann::json& j);
GroundTruth load_ground_truth(const std::filesystem::path& file);

struct ToolTrace {
  std::vector<CanonicalAction> actions;
  // Present when every executed entry carries pre and post digests.
  std::optional<std::vector<StateDigests>> digests;
};

// Executed actions of a log. Simulator logs key targets by element id,
// others by real_target_key.
ToolTrace trace_from_log(const InteractionLog& log);

// ---------------------------------------------------------------------------
// Benchmark

struct BenchmarkTask {
  std::string task_id;
  std::string level;
  std::optional<GroundTruth> ground_truth;
  ToolTrace trace;
};

struct TaskResult {
  std::string task_id;
  std::string level;
  TraceMetrics metrics;
  DifficultyRating difficulty;
};

struct LevelRow {
  std::string level;  // L1 | L2 | L3 | overall
  double tc = 0.0;
  double cs = 0.0;
  double ct = 0.0;
  double se = 0.0;
  int n = 0;
};

struct BenchmarkReport {
  std::vector<TaskResult> tasks;
  std::vector<LevelRow> rows;  // levels in order, then overall
  std::vector<std::string> warnings;
};

BenchmarkReport evaluate_benchmark(const std::vector<BenchmarkTask>& tasks);

std::string benchmark_csv(const BenchmarkReport& report);
nlohmann::json to_json(const BenchmarkReport& report);

// Each subdirectory is a task: ground_truth.json plus log/log.json.
std::vector<BenchmarkTask> load_benchmark_tasks(const std::filesystem::path& dir, std::vector<std::string>* warnings);

}  // namespace guiagent
