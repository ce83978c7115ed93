#include "guiagent/verification.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace guiagent {

namespace fs = std::filesystem;
using nlohmann::json;

const char* dimension_name(Dimension d) {
  switch (d) {
    case Dimension::Element: return "element";
    case Dimension::Page: return "page";
    case Dimension::Transition: return "transition";
  }
  return "element";
}

const char* point_outcome_name(PointOutcome o) {
  switch (o) {
    case PointOutcome::Passed: return "passed";
    case PointOutcome::Failed: return "failed";
    case PointOutcome::Inconclusive: return "inconclusive";
  }
  return "inconclusive";
}

namespace {

std::string json_quote(const std::string& s) { return json(s).dump(); }

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string summary_of(const ObservationRecord* obs) {
  if (obs == nullptr || !obs->page_summary || obs->page_summary->empty()) return "(no summary)";
  return *obs->page_summary;
}

std::string describe_element(const ElementDescriptor& e) {
  std::string s = "[" + std::to_string(e.marker_id) + "] " + e.class_name;
  if (!e.text.empty()) s += " text=" + json_quote(e.text);
  if (!e.content_desc.empty()) s += " content-desc=" + json_quote(e.content_desc);
  s += " function=" + json_quote(e.function_text()) + " bounds=" + format_bounds(e.bounds);
  return s;
}

std::string describe_action(const LogEntry& entry) {
  const UiAction& a = *entry.action;
  std::string s = action_kind_name(a.kind);
  if (a.kind == ActionKind::Type) s += " " + json_quote(a.text) + " into";
  if (a.target) {
    const auto* e = entry.observation.find(*a.target);
    if (e == nullptr) {
      s += " [" + std::to_string(*a.target) + "]";
    } else {
      s += " " + json_quote(e->text.empty() ? e->function_text() : e->text);
    }
  }
  if (a.kind == ActionKind::Scroll) s += std::string(" ") + direction_name(*a.direction);
  return s;
}

// Subject words that identify an element, minus generic widget nouns.
std::vector<std::string> subject_keywords(const std::string& subject) {
  static const std::set<std::string> kGeneric = {"the", "a", "an", "and", "of", "on", "in", "button", "page",
                                                 "screen", "icon", "field", "tab", "link", "text", "label", "is",
                                                 "shows", "visible", "present", "displayed", "with"};
  std::vector<std::string> out;
  std::string word;
  auto flush = [&] {
    if (word.size() >= 2 && !kGeneric.count(word)) out.push_back(word);
    word.clear();
  };
  for (char c : lower(subject)) {
    if (std::isalnum(static_cast<unsigned char>(c))) {
      word += c;
    } else {
      flush();
    }
  }
  flush();
  return out;
}

bool element_matches(const ElementDescriptor& e, const std::vector<std::string>& keywords) {
  if (keywords.empty()) return true;
  const std::string hay = lower(e.text + " " + e.content_desc + " " + e.function_text() + " " + e.resource_id);
  return std::any_of(keywords.begin(), keywords.end(), [&](const std::string& k) { return hay.find(k) != std::string::npos; });
}

Evidence finish(Dimension d, std::vector<EvidenceSource> sources, std::string header = {}) {
  Evidence ev{d, std::move(sources), std::move(header)};
  for (const auto& s : ev.sources) ev.combined_text += s.text + "\n";
  return ev;
}

}  // namespace

// ---------------------------------------------------------------------------

namespace {

constexpr const char* kDecomposeSystem =
    "You prepare GUI test verification. Break the test oracle into individual verification points. Each point "
    "is one statement about the app that can be answered yes or no on its own.";
constexpr const char* kDecomposeSchema = R"({"points": ["<verification point>", ...]})";

}  // namespace

std::vector<VerificationPoint> decompose_oracle(const TestOracle& oracle, Gateway& gateway) {
  if (oracle.text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw PreconditionError("test oracle is empty");
  }
  ChatRequest req;
  req.agent = "decomposer";
  req.structured_mode = true;
  req.schema_hint = kDecomposeSchema;
  req.messages.push_back(Message::text(Role::System, kDecomposeSystem));
  req.messages.push_back(Message::text(Role::User, "Test oracle: " + oracle.text));
  json doc;
  try {
    doc = *extract_json_document(gateway.chat(req, [](const json& d) -> std::string {
                                   if (!d.contains("points") || !d["points"].is_array()) return "'points' must be a list";
                                   for (const auto& p : d["points"]) {
                                     if (!p.is_string()) return "'points' entries must be strings";
                                   }
                                   return {};
                                 }).text);
  } catch (const MalformedResponseError& e) {
    throw DecompositionError("cannot decompose oracle " + oracle.oracle_id + ": " + e.what());
  }
  std::vector<VerificationPoint> points;
  for (const auto& p : doc["points"]) {
    const std::string q = p.get<std::string>();
    if (q.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    points.push_back({oracle.oracle_id + ".p" + std::to_string(points.size() + 1), q, oracle.oracle_id});
  }
  if (points.empty()) throw DecompositionError("oracle " + oracle.oracle_id + " yielded no verification points");
  return points;
}

// ---------------------------------------------------------------------------

std::string log_overview(const InteractionLog& log) {
  std::ostringstream out;
  for (std::size_t k = 0; k < log.state_count(); ++k) {
    const auto* obs = log.state(k);
    out << "State " << k << ": " << summary_of(obs) << "\n";
    for (const auto& e : obs->elements) out << "  " << describe_element(e) << "\n";
    if (k < log.entries.size()) {
      const auto& entry = log.entries[k];
      if (entry.executed()) {
        out << "Action " << k << ": " << describe_action(entry) << " (state " << k << " -> state " << k + 1 << ")\n";
      } else if (entry.failed) {
        out << "Action " << k << ": failed: " << entry.error << "\n";
      }
    }
  }
  return out.str();
}

std::vector<Evidence> render_evidence(const EvidenceSelection& selection, const InteractionLog& log,
                                      std::vector<std::string>* warnings) {
  if (log.state_count() == 0) throw EvidenceError("interaction log has no observations");
  auto warn = [&](const std::string& w) {
    if (warnings != nullptr) warnings->push_back(w);
  };
  auto valid_states = [&](const std::vector<std::size_t>& idx, const char* what) {
    std::vector<std::size_t> out;
    for (auto k : idx) {
      if (k < log.state_count()) {
        if (std::find(out.begin(), out.end(), k) == out.end()) out.push_back(k);
      } else {
        warn(std::string("dropped ") + what + " index " + std::to_string(k) + " outside the log");
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  };

  EvidenceSelection sel = selection;
  sel.element_states = valid_states(selection.element_states, "element state");
  sel.page_states = valid_states(selection.page_states, "page state");
  sel.transitions.clear();
  for (auto i : selection.transitions) {
    if (i < log.entries.size() && log.entries[i].executed() && log.state(i + 1) != nullptr) {
      if (std::find(sel.transitions.begin(), sel.transitions.end(), i) == sel.transitions.end()) sel.transitions.push_back(i);
    } else {
      warn("dropped transition index " + std::to_string(i) + " without an executed action");
    }
  }
  std::sort(sel.transitions.begin(), sel.transitions.end());
  if (sel.element_states.empty() && sel.page_states.empty() && sel.transitions.empty()) {
    sel.element_states.push_back(log.state_count() - 1);
  }

  std::vector<Evidence> out;
  const auto keywords = subject_keywords(sel.subject);
  if (!sel.element_states.empty()) {
    std::vector<EvidenceSource> sources;
    for (auto k : sel.element_states) {
      const auto* obs = log.state(k);
      std::string text = "State " + std::to_string(k) + " (" + summary_of(obs) + "):";
      bool any = false;
      for (const auto& e : obs->elements) {
        if (!element_matches(e, keywords)) continue;
        text += "\n  " + describe_element(e);
        any = true;
      }
      if (!any) text += " no element matches " + json_quote(sel.subject);
      sources.push_back({k, std::move(text)});
    }
    out.push_back(finish(Dimension::Element, std::move(sources)));
  }
  if (!sel.page_states.empty()) {
    std::vector<EvidenceSource> sources;
    for (auto k : sel.page_states) sources.push_back({k, "State " + std::to_string(k) + ": " + summary_of(log.state(k))});
    out.push_back(finish(Dimension::Page, std::move(sources)));
  }
  if (!sel.transitions.empty()) {
    std::vector<EvidenceSource> sources;
    for (auto i : sel.transitions) {
      sources.push_back({i, "State " + std::to_string(i) + " " + json_quote(summary_of(log.state(i))) + " --" +
                                describe_action(log.entries[i]) + "--> state " + std::to_string(i + 1) + " " +
                                json_quote(summary_of(log.state(i + 1)))});
    }
    Evidence ev = finish(Dimension::Transition, std::move(sources));
    std::string seq = "Page sequence:";
    for (std::size_t k = 0; k < log.state_count(); ++k) seq += (k ? " -> " : " ") + json_quote(summary_of(log.state(k)));
    ev.combined_text += seq + "\n";
    out.push_back(std::move(ev));
  }
  return out;
}

namespace {

constexpr const char* kExtractSystem =
    "You collect evidence for one GUI test verification point from an interaction log. The log lists each "
    "observed state with its page summary and elements, and the actions between states. Name the subject of the "
    "point and pick the relevant log indices for each kind of evidence: element (element functions and "
    "properties, by state index), page (page structure and category, by state index) and transition (page "
    "changes, by action index). Leave a list empty when that kind of evidence does not apply.";
constexpr const char* kExtractSchema =
    R"({"subject": "<element or page the point is about>", "element": [<state index>, ...], )"
    R"("page": [<state index>, ...], "transition": [<action index>, ...]})";

std::string validate_selection(const json& d) {
  for (const char* key : {"element", "page", "transition"}) {
    if (!d.contains(key)) continue;
    if (!d[key].is_array()) return std::string("'") + key + "' must be a list of indices";
    for (const auto& v : d[key]) {
      if (!v.is_number_integer()) return std::string("'") + key + "' must contain integers";
    }
  }
  if (d.contains("subject") && !d["subject"].is_string()) return "'subject' must be a string";
  return {};
}

}  // namespace

std::vector<Evidence> extract_evidence(const VerificationPoint& point, const InteractionLog& log, Gateway& gateway,
                                       std::vector<std::string>* warnings) {
  if (log.state_count() == 0) throw EvidenceError("interaction log has no observations");
  ChatRequest req;
  req.agent = "extractor";
  req.structured_mode = true;
  req.schema_hint = kExtractSchema;
  req.messages.push_back(Message::text(Role::System, kExtractSystem));
  req.messages.push_back(
      Message::text(Role::User, "Verification point: " + point.question + "\n\nInteraction log:\n" + log_overview(log)));
  json doc = *extract_json_document(gateway.chat(req, validate_selection).text);
  EvidenceSelection sel;
  sel.subject = doc.value("subject", std::string());
  auto indices = [&](const char* key) {
    std::vector<std::size_t> out;
    if (!doc.contains(key)) return out;
    for (const auto& v : doc[key]) {
      const auto i = v.get<std::int64_t>();
      if (i < 0) {
        if (warnings != nullptr) warnings->push_back(std::string("dropped negative ") + key + " index");
        continue;
      }
      out.push_back(static_cast<std::size_t>(i));
    }
    return out;
  };
  sel.element_states = indices("element");
  sel.page_states = indices("page");
  sel.transitions = indices("transition");
  return render_evidence(sel, log, warnings);
}

// ---------------------------------------------------------------------------

namespace {

constexpr const char* kJudgeSystem =
    "You are a GUI test oracle. Decide whether the verification point holds, using the evidence extracted from "
    "the interaction log and the attached screenshot. Explain the decision, naming the elements or pages involved.";
constexpr const char* kJudgeSchema = R"({"verdict": "pass" | "fail", "explanation": "<reason>"})";

}  // namespace

Verdict judge(const VerificationPoint& point, const std::vector<Evidence>& evidence, const InteractionLog& log,
              Gateway& gateway) {
  if (evidence.empty()) throw PreconditionError("judge needs at least one piece of evidence");
  Verdict v;
  v.point_id = point.point_id;
  v.evidence = evidence;

  std::size_t last_state = 0;
  for (const auto& ev : evidence) {
    for (const auto& s : ev.sources) {
      last_state = std::max(last_state, ev.dimension == Dimension::Transition ? s.index + 1 : s.index);
    }
  }
  std::string body = "Verification point: " + point.question + "\n";
  for (const auto& ev : evidence) body += "\nEvidence (" + std::string(dimension_name(ev.dimension)) + "):\n" + ev.combined_text;

  ChatRequest req;
  req.agent = "judge";
  req.structured_mode = true;
  req.schema_hint = kJudgeSchema;
  req.messages.push_back(Message::text(Role::System, kJudgeSystem));
  Message user;
  user.role = Role::User;
  if (const auto* obs = log.state(last_state); obs != nullptr && !obs->screenshot.empty()) {
    user.parts.emplace_back(ImagePart{log.read_file(obs->screenshot), "image/png"});
  }
  user.parts.emplace_back(TextPart{body});
  req.messages.push_back(std::move(user));

  try {
    json doc = *extract_json_document(gateway.chat(req, [](const json& d) -> std::string {
                                        const std::string verdict = d.value("verdict", std::string());
                                        if (verdict != "pass" && verdict != "fail") return "'verdict' must be \"pass\" or \"fail\"";
                                        if (!d.contains("explanation") || !d["explanation"].is_string() ||
                                            d["explanation"].get<std::string>().empty()) {
                                          return "'explanation' must be a non-empty string";
                                        }
                                        return {};
                                      }).text);
    v.outcome = doc["verdict"] == "pass" ? PointOutcome::Passed : PointOutcome::Failed;
    v.explanation = doc["explanation"].get<std::string>();
  } catch (const MissingFixtureError&) {
    throw;
  } catch (const GatewayError& e) {
    v.outcome = PointOutcome::Inconclusive;
    v.explanation = std::string("judgment unavailable: ") + e.what();
  }
  return v;
}

// ---------------------------------------------------------------------------

bool VerificationReport::all_passed() const {
  return std::all_of(oracles.begin(), oracles.end(),
                     [](const OracleResult& o) { return o.result == PointOutcome::Passed; });
}

VerificationReport verify(const std::vector<TestOracle>& oracles, const InteractionLog& log, Gateway& gateway) {
  if (oracles.empty()) throw PreconditionError("no oracles to verify");
  if (log.state_count() == 0) throw EvidenceError("interaction log has no observations");
  VerificationReport report;
  for (const auto& oracle : oracles) {
    OracleResult result;
    result.oracle = oracle;
    std::vector<VerificationPoint> points;
    try {
      points = decompose_oracle(oracle, gateway);
    } catch (const DecompositionError& e) {
      result.warnings.push_back(e.what());
      PointResult pr{{oracle.oracle_id + ".p1", oracle.text, oracle.oracle_id}, {}};
      pr.verdict.point_id = pr.point.point_id;
      pr.verdict.explanation = e.what();
      result.points.push_back(std::move(pr));
    }
    for (const auto& p : points) {
      PointResult pr{p, {}};
      pr.verdict.point_id = p.point_id;
      try {
        auto evidence = extract_evidence(p, log, gateway, &result.warnings);
        pr.verdict = judge(p, evidence, log, gateway);
      } catch (const MalformedResponseError& e) {
        pr.verdict.outcome = PointOutcome::Inconclusive;
        pr.verdict.explanation = std::string("evidence extraction unavailable: ") + e.what();
      }
      result.points.push_back(std::move(pr));
    }
    bool any_failed = false;
    bool any_inconclusive = false;
    for (const auto& pr : result.points) {
      ++report.totals.points;
      switch (pr.verdict.outcome) {
        case PointOutcome::Passed: ++report.totals.passed; break;
        case PointOutcome::Failed: ++report.totals.failed; any_failed = true; break;
        case PointOutcome::Inconclusive: ++report.totals.inconclusive; any_inconclusive = true; break;
      }
    }
    result.result = any_inconclusive ? PointOutcome::Inconclusive
                    : any_failed     ? PointOutcome::Failed
                                     : PointOutcome::Passed;
    report.oracles.push_back(std::move(result));
  }
  report.usage = gateway.ledger().totals();
  return report;
}

json to_json(const VerificationReport& report) {
  json oracles = json::array();
  for (const auto& o : report.oracles) {
    json points = json::array();
    for (const auto& pr : o.points) {
      json evidence = json::array();
      for (const auto& ev : pr.verdict.evidence) {
        json idx = json::array();
        for (const auto& s : ev.sources) idx.push_back(s.index);
        evidence.push_back({{"dimension", dimension_name(ev.dimension)}, {"indices", idx}, {"text", ev.combined_text}});
      }
      points.push_back({{"point_id", pr.point.point_id},
                        {"question", pr.point.question},
                        {"outcome", point_outcome_name(pr.verdict.outcome)},
                        {"explanation", pr.verdict.explanation},
                        {"evidence", std::move(evidence)}});
    }
    const char* result = o.result == PointOutcome::Passed   ? "pass"
                         : o.result == PointOutcome::Failed ? "fail"
                                                            : "inconclusive";
    json entry = {{"oracle_id", o.oracle.oracle_id}, {"text", o.oracle.text}, {"result", result}, {"points", std::move(points)}};
    if (!o.warnings.empty()) entry["warnings"] = o.warnings;
    oracles.push_back(std::move(entry));
  }
  return {{"oracles", std::move(oracles)},
          {"totals",
           {{"points", report.totals.points},
            {"passed", report.totals.passed},
            {"failed", report.totals.failed},
            {"inconclusive", report.totals.inconclusive}}},
          {"usage", {{"prompt_tokens", report.usage.prompt_tokens}, {"completion_tokens", report.usage.completion_tokens}}}};
}

void write_report(const VerificationReport& report, const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file);
  out << to_json(report).dump(2) << '\n';
  if (!out) throw Error("cannot write " + file.string());
}

std::vector<TestOracle> load_oracles(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot read oracle file " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  std::vector<TestOracle> out;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '[') {
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::exception& e) {
      throw ConfigError("malformed oracle file " + file.string() + ": " + e.what());
    }
    for (const auto& item : doc) {
      if (item.is_string()) {
        out.push_back({"O" + std::to_string(out.size() + 1), item.get<std::string>()});
      } else if (item.is_object() && item.contains("text") && item["text"].is_string()) {
        out.push_back({item.value("oracle_id", "O" + std::to_string(out.size() + 1)), item["text"].get<std::string>()});
      } else {
        throw ConfigError("oracle file " + file.string() + ": entry " + std::to_string(out.size()) + " has no text");
      }
    }
  } else {
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
      const auto b = line.find_first_not_of(" \t\r");
      if (b == std::string::npos) continue;
      const auto e = line.find_last_not_of(" \t\r");
      out.push_back({"O" + std::to_string(out.size() + 1), line.substr(b, e - b + 1)});
    }
  }
  if (out.empty()) throw ConfigError("oracle file " + file.string() + " lists no oracles");
  return out;
}

}  // namespace guiagent
