#include "guiagent/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

namespace guiagent {

namespace fs = std::filesystem;
using nlohmann::json;

CanonicalAction CanonicalAction::click(std::string key) { return {ActionKind::Click, std::move(key), {}, {}, {}}; }
CanonicalAction CanonicalAction::long_press(std::string key) { return {ActionKind::LongPress, std::move(key), {}, {}, {}}; }
CanonicalAction CanonicalAction::type(std::string key, std::string text) {
  return {ActionKind::Type, std::move(key), std::move(text), {}, {}};
}
CanonicalAction CanonicalAction::scroll(std::string key, Direction dir, Distance dist) {
  return {ActionKind::Scroll, std::move(key), {}, dir, dist};
}
CanonicalAction CanonicalAction::back() { return {ActionKind::Back, {}, {}, {}, {}}; }

std::string CanonicalAction::identity() const {
  std::string s = action_kind_name(kind);
  if (kind == ActionKind::Back) return s;
  s += '\x1f' + target_key;
  if (kind == ActionKind::Type) s += '\x1f' + text;
  if (kind == ActionKind::Scroll && direction) s += std::string(1, '\x1f') + direction_name(*direction);
  return s;
}

std::string CanonicalAction::describe() const {
  std::string s = action_kind_name(kind);
  if (kind == ActionKind::Back) return s;
  s += "(" + target_key;
  if (kind == ActionKind::Type) s += ", \"" + text + "\"";
  if (kind == ActionKind::Scroll && direction) s += std::string(", ") + direction_name(*direction);
  return s + ")";
}

std::string real_target_key(const std::string& class_name, const std::string& text_or_desc, Point center, int bucket) {
  if (bucket <= 0) throw PreconditionError("center bucket must be positive");
  auto b = [bucket](int v) { return v >= 0 ? v / bucket : -((-v + bucket - 1) / bucket); };
  return class_name + "|" + text_or_desc + "|" + std::to_string(b(center.x)) + "," + std::to_string(b(center.y));
}

// ---------------------------------------------------------------------------

namespace {

struct Item {
  CanonicalAction action;
  std::optional<StateDigests> digests;
};

bool remove_reverts(std::vector<Item>& items) {
  std::vector<Item> out;
  for (auto& it : items) {
    if (it.action.kind == ActionKind::Back && !out.empty() && out.back().action.kind != ActionKind::Back) {
      out.pop_back();
      continue;
    }
    out.push_back(std::move(it));
  }
  const bool changed = out.size() != items.size();
  items.swap(out);
  return changed;
}

bool collapse_repeats(std::vector<Item>& items) {
  bool changed = false;
  std::vector<Item> out;
  for (auto& it : items) {
    if (!out.empty() && out.back().action == it.action) {
      if (out.back().digests && it.digests) out.back().digests->post = it.digests->post;
      changed = true;
      continue;
    }
    out.push_back(it);
  }
  items.swap(out);
  return changed;
}

bool remove_no_ops(std::vector<Item>& items) {
  const auto before = items.size();
  std::erase_if(items, [](const Item& it) { return it.digests && it.digests->pre == it.digests->post; });
  return items.size() != before;
}

}  // namespace

std::vector<CanonicalAction> filter_trace(const std::vector<CanonicalAction>& trace,
                                          const std::vector<StateDigests>* digests) {
  if (digests != nullptr && digests->size() != trace.size()) {
    throw PreconditionError("filter_trace: " + std::to_string(digests->size()) + " digests for " +
                            std::to_string(trace.size()) + " actions");
  }
  std::vector<Item> items;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    items.push_back({trace[i], digests ? std::optional<StateDigests>((*digests)[i]) : std::nullopt});
  }
  bool changed = true;
  while (changed) {
    changed = remove_reverts(items);
    changed = collapse_repeats(items) || changed;
    changed = remove_no_ops(items) || changed;
  }
  std::vector<CanonicalAction> out;
  for (auto& it : items) out.push_back(std::move(it.action));
  return out;
}

int task_completion(const std::vector<CanonicalAction>& trace_p, const std::vector<CanonicalAction>& ground_truth) {
  return trace_p == ground_truth ? 1 : 0;
}

double correct_step(const std::vector<CanonicalAction>& raw, const std::vector<CanonicalAction>& ground_truth) {
  if (raw.empty()) return 0.0;
  std::map<std::string, int> remaining;
  for (const auto& a : ground_truth) ++remaining[a.identity()];
  std::size_t common = 0;
  for (const auto& a : raw) {
    auto it = remaining.find(a.identity());
    if (it != remaining.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  return static_cast<double>(common) / static_cast<double>(raw.size());
}

double correct_trace(const std::vector<CanonicalAction>& raw, const std::vector<CanonicalAction>& ground_truth) {
  if (ground_truth.empty()) throw PreconditionError("correct_trace needs a non-empty ground truth");
  std::size_t lcp = 0;
  while (lcp < raw.size() && lcp < ground_truth.size() && raw[lcp] == ground_truth[lcp]) ++lcp;
  return static_cast<double>(lcp) / static_cast<double>(ground_truth.size());
}

double step_efficiency(const std::vector<CanonicalAction>& raw, const std::vector<CanonicalAction>& trace_p, int tc) {
  if (tc != 1 || raw.empty()) return 0.0;
  return static_cast<double>(trace_p.size()) / static_cast<double>(raw.size());
}

TraceMetrics compute_metrics(const std::vector<CanonicalAction>& raw, const std::vector<CanonicalAction>& ground_truth,
                             const std::vector<StateDigests>* digests) {
  const auto trace_p = filter_trace(raw, digests);
  TraceMetrics m;
  m.tc = task_completion(trace_p, ground_truth);
  m.cs = correct_step(raw, ground_truth);
  m.ct = correct_trace(raw, ground_truth);
  m.se = step_efficiency(raw, trace_p, m.tc);
  m.filtered_length = trace_p.size();
  m.raw_length = raw.size();
  return m;
}

DifficultyRating difficulty(const std::vector<CanonicalAction>& ground_truth, int command_count) {
  if (command_count < 1) throw PreconditionError("command_count must be at least 1");
  if (ground_truth.empty()) throw PreconditionError("ground truth must not be empty");
  DifficultyRating d;
  d.step_ideal = static_cast<int>(ground_truth.size());
  d.score_vag = static_cast<double>(d.step_ideal) / static_cast<double>(command_count);
  return d;
}

// ---------------------------------------------------------------------------

json to_json(const CanonicalAction& a) {
  json j = {{"kind", action_kind_name(a.kind)}};
  if (a.kind != ActionKind::Back) j["target"] = a.target_key;
  if (a.kind == ActionKind::Type) j["text"] = a.text;
  if (a.direction) j["direction"] = direction_name(*a.direction);
  if (a.distance) j["distance"] = distance_name(*a.distance);
  return j;
}

CanonicalAction canonical_action_from_json(const json& j) {
  CanonicalAction a;
  a.kind = parse_action_kind(j.at("kind").get<std::string>());
  if (a.kind != ActionKind::Back) {
    if (j.contains("target")) {
      a.target_key = j["target"].get<std::string>();
    } else if (j.contains("element")) {
      const auto& e = j["element"];
      std::string label = e.value("text", std::string());
      if (label.empty()) label = e.value("content_desc", std::string());
      const auto& c = e.at("center");
      a.target_key = real_target_key(e.at("class").get<std::string>(), label, {c.at(0).get<int>(), c.at(1).get<int>()});
    } else {
      throw ParseError("action " + j.dump() + " has no target");
    }
  }
  if (a.kind == ActionKind::Type) a.text = j.at("text").get<std::string>();
  if (a.kind == ActionKind::Scroll) {
    a.direction = parse_direction(j.at("direction").get<std::string>());
    a.distance = parse_distance(j.value("distance", std::string("medium")));
  }
  return a;
}

GroundTruth ground_truth_from_json(const json& j) {
  GroundTruth gt;
  gt.task_id = j.at("task_id").get<std::string>();
  gt.level = j.at("level").get<std::string>();
  if (gt.level != "L1" && gt.level != "L2" && gt.level != "L3") {
    throw ParseError("task " + gt.task_id + ": level must be L1, L2 or L3");
  }
  gt.command_count = j.value("command_count", 1);
  for (const auto& a : j.at("actions")) gt.actions.push_back(canonical_action_from_json(a));
  if (gt.actions.empty()) throw ParseError("task " + gt.task_id + ": ground truth has no actions");
  return gt;
}

GroundTruth load_ground_truth(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read ground truth " + file.string());
  try {
    json doc;
    in >> doc;
    return ground_truth_from_json(doc);
  } catch (const json::exception& e) {
    throw ParseError("malformed ground truth " + file.string() + ": " + e.what());
  }
}

ToolTrace trace_from_log(const InteractionLog& log) {
  ToolTrace t;
  std::vector<StateDigests> digests;
  bool all_digests = true;
  const bool sim = log.device_kind == "sim";
  for (const auto& entry : log.entries) {
    if (!entry.executed()) continue;
    const UiAction& ua = *entry.action;
    CanonicalAction a;
    a.kind = ua.kind;
    a.text = ua.text;
    a.direction = ua.direction;
    a.distance = ua.distance;
    if (ua.target) {
      const auto* e = entry.observation.find(*ua.target);
      if (e == nullptr) throw LogFormatError("log entry targets marker " + std::to_string(*ua.target) + " not in its observation");
      if (sim && !e->resource_id.empty()) {
        a.target_key = e->resource_id;
      } else {
        a.target_key = real_target_key(e->class_name, e->text.empty() ? e->content_desc : e->text, e->bounds.center());
      }
    }
    t.actions.push_back(std::move(a));
    if (entry.pre_state_digest && entry.post_state_digest) {
      digests.push_back({*entry.pre_state_digest, *entry.post_state_digest});
    } else {
      all_digests = false;
    }
  }
  if (all_digests && !t.actions.empty()) t.digests = std::move(digests);
  return t;
}

// ---------------------------------------------------------------------------

BenchmarkReport evaluate_benchmark(const std::vector<BenchmarkTask>& tasks) {
  BenchmarkReport report;
  std::map<std::string, std::vector<const TaskResult*>> by_level;
  for (const auto& task : tasks) {
    if (!task.ground_truth) {
      report.warnings.push_back("task " + task.task_id + ": no ground truth, skipped");
      continue;
    }
    TaskResult r;
    r.task_id = task.task_id;
    r.level = task.ground_truth->level;
    r.metrics = compute_metrics(task.trace.actions, task.ground_truth->actions,
                                task.trace.digests ? &*task.trace.digests : nullptr);
    r.difficulty = difficulty(task.ground_truth->actions, task.ground_truth->command_count);
    report.tasks.push_back(std::move(r));
  }
  for (const auto& r : report.tasks) by_level[r.level].push_back(&r);
  auto row = [](std::string level, const std::vector<const TaskResult*>& rs) {
    LevelRow row;
    row.level = std::move(level);
    row.n = static_cast<int>(rs.size());
    for (const auto* r : rs) {
      row.tc += r->metrics.tc;
      row.cs += r->metrics.cs;
      row.ct += r->metrics.ct;
      row.se += r->metrics.se;
    }
    if (row.n > 0) {
      row.tc /= row.n;
      row.cs /= row.n;
      row.ct /= row.n;
      row.se /= row.n;
    }
    return row;
  };
  std::vector<const TaskResult*> all;
  for (const auto& [level, rs] : by_level) {
    report.rows.push_back(row(level, rs));
    all.insert(all.end(), rs.begin(), rs.end());
  }
  report.rows.push_back(row("overall", all));
  return report;
}

std::string benchmark_csv(const BenchmarkReport& report) {
  std::string out = "level,TC,CS,CT,SE,n\n";
  char buf[160];
  for (const auto& r : report.rows) {
    std::snprintf(buf, sizeof buf, "%s,%.4f,%.4f,%.4f,%.4f,%d\n", r.level.c_str(), r.tc, r.cs, r.ct, r.se, r.n);
    out += buf;
  }
  return out;
}

json to_json(const BenchmarkReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"level", r.level}, {"TC", r.tc}, {"CS", r.cs}, {"CT", r.ct}, {"SE", r.se}, {"n", r.n}});
  }
  json tasks = json::array();
  for (const auto& t : report.tasks) {
    tasks.push_back({{"task_id", t.task_id},
                     {"level", t.level},
                     {"TC", t.metrics.tc},
                     {"CS", t.metrics.cs},
                     {"CT", t.metrics.ct},
                     {"SE", t.metrics.se},
                     {"filtered_length", t.metrics.filtered_length},
                     {"raw_length", t.metrics.raw_length},
                     {"step_ideal", t.difficulty.step_ideal},
                     {"score_vag", t.difficulty.score_vag}});
  }
  return {{"rows", std::move(rows)}, {"tasks", std::move(tasks)}, {"warnings", report.warnings}};
}

std::vector<BenchmarkTask> load_benchmark_tasks(const fs::path& dir, std::vector<std::string>* warnings) {
  if (!fs::is_directory(dir)) throw ConfigError("tasks directory " + dir.string() + " does not exist");
  std::vector<fs::path> subdirs;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) subdirs.push_back(e.path());
  }
  std::sort(subdirs.begin(), subdirs.end());
  std::vector<BenchmarkTask> tasks;
  for (const auto& sub : subdirs) {
    if (!fs::exists(sub / "log" / "log.json")) {
      if (warnings != nullptr) warnings->push_back("task " + sub.filename().string() + ": no log, skipped");
      continue;
    }
    BenchmarkTask t;
    t.task_id = sub.filename().string();
    if (fs::exists(sub / "ground_truth.json")) {
      t.ground_truth = load_ground_truth(sub / "ground_truth.json");
      t.task_id = t.ground_truth->task_id;
      t.level = t.ground_truth->level;
    }
    t.trace = trace_from_log(read_log(sub / "log"));
    tasks.push_back(std::move(t));
  }
  if (tasks.empty()) throw ConfigError("tasks directory " + dir.string() + " holds no tasks");
  return tasks;
}

}  // namespace guiagent
