#include "guiagent/cli.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "guiagent/backends.hpp"
#include "guiagent/eval.hpp"
#include "guiagent/frontend.hpp"
#include "guiagent/interaction.hpp"
#include "guiagent/verification.hpp"

namespace guiagent {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class BackendMode { Configured, Record, Replay };

struct RunOptions {
  std::string requirement;
  std::string device;
  std::string overlay;
  std::string backend;
  std::string fixtures;
  std::string out = "guiagent-out";
  int max_steps = kDefaultMaxSteps;
  std::string predicate_mode = "strict";
  std::string kb;
  double kb_threshold = 0.90;
  double iou_threshold = 0.5;
  std::string detector;
  std::string embedder;
  std::string bridge_exe = "adb";
  int settle_ms = 1500;
};

void add_run_options(CLI::App& cmd, RunOptions& o) {
  cmd.add_option("requirement", o.requirement, "Requirement file (text or JSON batch)")->required();
  cmd.add_option("--device", o.device, "sim:<manifest>[+<overlay>] or a device serial")->required();
  cmd.add_option("--overlay", o.overlay, "Anomaly overlay for a simulated app");
  cmd.add_option("--backend", o.backend, "Backend config file")->required();
  cmd.add_option("--fixtures", o.fixtures, "Fixture directory (record/replay)");
  cmd.add_option("--out", o.out, "Output directory");
  cmd.add_option("--max-steps", o.max_steps, "Action budget for concise commands")->check(CLI::PositiveNumber);
  cmd.add_option("--predicate-mode", o.predicate_mode, "Interactive-node predicate")
      ->check(CLI::IsMember({"strict", "literal"}));
  cmd.add_option("--kb", o.kb, "Knowledge base directory");
  cmd.add_option("--kb-threshold", o.kb_threshold, "Knowledge base similarity threshold")->check(CLI::Range(0.0, 1.0));
  cmd.add_option("--iou-threshold", o.iou_threshold, "Detection merge threshold")->check(CLI::Range(0.0, 1.0));
  cmd.add_option("--detector", o.detector, "Vision detector endpoint");
  cmd.add_option("--embedder", o.embedder, "Embedding service endpoint");
  cmd.add_option("--bridge", o.bridge_exe, "Debug bridge executable for real devices");
  cmd.add_option("--settle-ms", o.settle_ms, "Settle delay after real-device actions")->check(CLI::NonNegativeNumber);
}

std::string safe_name(std::string id) {
  for (auto& c : id) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  }
  return id.empty() ? "requirement" : id;
}

std::unique_ptr<Device> make_device(const RunOptions& o) {
  if (o.device.rfind("sim:", 0) == 0) {
    std::string spec = o.device.substr(4);
    std::optional<fs::path> overlay;
    if (auto plus = spec.find('+'); plus != std::string::npos) {
      overlay = spec.substr(plus + 1);
      spec.resize(plus);
    }
    if (!o.overlay.empty()) {
      if (overlay) throw ConfigError("overlay given twice (in --device and --overlay)");
      overlay = o.overlay;
    }
    if (!fs::exists(spec)) throw ManifestError("manifest not found: " + spec);
    return load_sim_app(spec, overlay);
  }
  if (!o.overlay.empty()) throw ConfigError("--overlay applies to simulated apps only");
  BridgeConfig cfg;
  cfg.executable = o.bridge_exe;
  cfg.serial = o.device;
  cfg.settle_ms = o.settle_ms;
  return std::make_unique<BridgeDevice>(cfg);
}

std::shared_ptr<Backend> make_backend(const RunOptions& o, BackendMode mode, const fs::path& out) {
  BackendConfig cfg = BackendConfig::load(o.backend);
  cfg.apply_environment();
  if (!o.fixtures.empty()) cfg.fixtures = o.fixtures;
  switch (mode) {
    case BackendMode::Configured: return make_live_backend(cfg);
    case BackendMode::Replay:
      cfg.kind = "replay";
      return make_live_backend(cfg);
    case BackendMode::Record: {
      if (cfg.kind == "replay") throw ConfigError("record needs a live backend (http or scripted), not replay");
      auto inner = make_live_backend(cfg);
      const fs::path dir = o.fixtures.empty() ? out / "fixtures" : fs::path(o.fixtures);
      fs::create_directories(dir);
      return std::make_shared<RecordingBackend>(inner, dir);
    }
  }
  return nullptr;
}

GatewayOptions gateway_options(const RunOptions& o) {
  BackendConfig cfg = BackendConfig::load(o.backend);
  return cfg.gateway;
}

int cmd_run(const RunOptions& o, BackendMode mode, std::ostream& out) {
  if (o.max_steps < 1) throw ConfigError("--max-steps must be at least 1");
  const fs::path out_dir = o.out;
  auto requirements = load_requirements(o.requirement);
  make_device(o);  // fail fast on a bad device spec before any model call
  auto backend = make_backend(o, mode, out_dir);
  const GatewayOptions gw_options = gateway_options(o);

  std::shared_ptr<KnowledgeBase> kb;
  std::shared_ptr<Embedder> embedder;
  if (!o.kb.empty()) {
    kb = std::make_shared<KnowledgeBase>(KnowledgeBase::load(o.kb));
    if (!o.embedder.empty()) embedder = std::make_shared<HttpEmbedder>(o.embedder);
  }

  bool all_ok = true;
  for (const auto& req : requirements) {
    const fs::path dir = out_dir / safe_name(req.id);
    Gateway gateway(backend, gw_options);
    ObserverOptions obs_opts;
    obs_opts.enumerate.mode = parse_predicate_mode(o.predicate_mode);
    obs_opts.enumerate.iou_threshold = o.iou_threshold;
    obs_opts.kb_threshold = o.kb_threshold;
    Observer observer(gateway, obs_opts);
    if (kb) observer.set_knowledge_base(kb, embedder);
    if (!o.detector.empty()) observer.set_detector(std::make_shared<HttpVisionDetector>(o.detector));

    SplitRequirement split = split_requirement(req, gateway);
    auto device = make_device(o);
    RunContext ctx{*device, gateway, observer, dir};
    InteractionLog log = run_commands(split.commands_text, ctx, o.max_steps);

    VerificationReport report;
    if (!split.oracles.empty()) report = verify(split.oracles, log, gateway);
    report.usage = gateway.ledger().totals();
    write_report(report, dir / "report.json");

    const bool ok = log.status == RunStatus::Success && report.all_passed();
    all_ok = all_ok && ok;
    out << req.id << ": interaction " << run_status_name(log.status) << " (" << log.executed_count()
        << " actions), oracles " << std::count_if(report.oracles.begin(), report.oracles.end(),
                                                  [](const OracleResult& r) { return r.result == PointOutcome::Passed; })
        << "/" << report.oracles.size() << " passed, points " << report.totals.passed << "/" << report.totals.points
        << " passed -> " << (ok ? "PASS" : "FAIL") << "\n";
    for (const auto& r : report.oracles) {
      for (const auto& p : r.points) {
        if (p.verdict.outcome == PointOutcome::Passed) continue;
        out << "  " << point_outcome_name(p.verdict.outcome) << " " << p.point.point_id << ": " << p.point.question
            << " (" << p.verdict.explanation << ")\n";
      }
    }
  }
  return all_ok ? kExitPass : kExitFail;
}

struct VerifyOptions {
  std::string log_dir;
  std::string oracles;
  std::string backend;
  std::string fixtures;
  std::string out;
};

int cmd_verify(const VerifyOptions& o, std::ostream& out) {
  InteractionLog log = read_log(o.log_dir);
  if (log.state_count() == 0 || !log.final_observation) throw LogFormatError("log " + o.log_dir + " is incomplete");
  auto oracles = load_oracles(o.oracles);
  BackendConfig cfg = BackendConfig::load(o.backend);
  cfg.apply_environment();
  if (!o.fixtures.empty()) cfg.fixtures = o.fixtures;
  Gateway gateway(make_live_backend(cfg), cfg.gateway);
  VerificationReport report = verify(oracles, log, gateway);
  const fs::path dest = (o.out.empty() ? fs::path(o.log_dir) : fs::path(o.out)) / "report.json";
  write_report(report, dest);
  out << "points " << report.totals.passed << "/" << report.totals.points << " passed, " << report.totals.failed
      << " failed, " << report.totals.inconclusive << " inconclusive -> " << (report.all_passed() ? "PASS" : "FAIL")
      << "\n";
  return report.all_passed() ? kExitPass : kExitFail;
}

int cmd_eval(const std::string& tasks_dir, const std::string& out_dir, std::ostream& out, std::ostream& err) {
  std::vector<std::string> warnings;
  auto tasks = load_benchmark_tasks(tasks_dir, &warnings);
  BenchmarkReport report = evaluate_benchmark(tasks);
  report.warnings.insert(report.warnings.begin(), warnings.begin(), warnings.end());
  if (report.tasks.empty()) throw ConfigError("no task in " + tasks_dir + " has a ground truth");
  fs::create_directories(out_dir);
  const std::string csv = benchmark_csv(report);
  {
    std::ofstream f(fs::path(out_dir) / "benchmark.csv", std::ios::binary);
    f << csv;
  }
  {
    std::ofstream f(fs::path(out_dir) / "benchmark.json");
    f << to_json(report).dump(2) << "\n";
  }
  for (const auto& w : report.warnings) err << "warning: " << w << "\n";
  out << csv;
  return kExitPass;
}

int cmd_sim_inspect(const std::string& manifest, const std::string& overlay, std::ostream& out) {
  auto dev = load_sim_app(manifest, overlay.empty() ? std::nullopt : std::optional<fs::path>(overlay));
  const SimManifest& m = dev->manifest();
  out << "screen " << m.screen.width << "x" << m.screen.height << ", start page " << m.start_page << "\n";
  for (const auto& p : m.pages) {
    out << "page " << p.id << " (" << p.elements.size() << " elements)\n";
    for (const auto& e : p.elements) {
      out << "  " << e.id << " " << e.class_name << " " << format_bounds(e.bounds);
      if (!e.text.empty()) out << " text=" << json(e.text).dump();
      if (!e.content_desc.empty()) out << " desc=" << json(e.content_desc).dump();
      if (e.clickable) out << " clickable";
      if (e.editable) out << " editable";
      if (e.scrollable) out << " scrollable";
      out << "\n";
    }
  }
  out << "transitions\n";
  for (const auto& t : m.transitions) {
    out << "  " << t.page << "." << t.element << " --" << t.action;
    if (t.direction) out << ":" << *t.direction;
    out << "--> " << t.target_page;
    for (const auto& eff : t.effects) out << " [" << eff.key << "=" << eff.value_template << "]";
    out << "\n";
  }
  return kExitPass;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Natural-language GUI testing engine"};
  app.require_subcommand(1);

  RunOptions run_opts;
  auto* run = app.add_subcommand("run", "Split, interact and verify a requirement");
  add_run_options(*run, run_opts);

  RunOptions record_opts;
  auto* record = app.add_subcommand("record", "Run through a live backend and write fixtures");
  add_run_options(*record, record_opts);

  RunOptions replay_opts;
  auto* replay = app.add_subcommand("replay", "Run from recorded fixtures only");
  add_run_options(*replay, replay_opts);

  VerifyOptions verify_opts;
  auto* verify_cmd = app.add_subcommand("verify", "Verify oracles against an existing log");
  verify_cmd->add_option("log_dir", verify_opts.log_dir, "Log directory")->required();
  verify_cmd->add_option("oracles", verify_opts.oracles, "Oracle file")->required();
  verify_cmd->add_option("--backend", verify_opts.backend, "Backend config file")->required();
  verify_cmd->add_option("--fixtures", verify_opts.fixtures, "Fixture directory");
  verify_cmd->add_option("--out", verify_opts.out, "Output directory (default: the log directory)");

  std::string tasks_dir;
  std::string eval_out = "benchmark";
  auto* eval = app.add_subcommand("eval", "Compute TC/CS/CT/SE over a task suite");
  eval->add_option("tasks_dir", tasks_dir, "Directory of tasks")->required();
  eval->add_option("--out", eval_out, "Output directory");

  std::string manifest;
  std::string inspect_overlay;
  auto* inspect = app.add_subcommand("sim-inspect", "Print a simulated app's pages and transitions");
  inspect->add_option("manifest", manifest, "App manifest")->required();
  inspect->add_option("--overlay", inspect_overlay, "Anomaly overlay");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitPass : kExitError;
  }

  try {
    if (run->parsed()) return cmd_run(run_opts, BackendMode::Configured, out);
    if (record->parsed()) return cmd_run(record_opts, BackendMode::Record, out);
    if (replay->parsed()) return cmd_run(replay_opts, BackendMode::Replay, out);
    if (verify_cmd->parsed()) return cmd_verify(verify_opts, out);
    if (eval->parsed()) return cmd_eval(tasks_dir, eval_out, out, err);
    if (inspect->parsed()) return cmd_sim_inspect(manifest, inspect_overlay, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}

}  // namespace guiagent
