#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "guiagent/gateway.hpp"
#include "guiagent/interaction_log.hpp"

namespace guiagent {

struct TestOracle {
  std::string oracle_id;
  std::string text;
};

struct VerificationPoint {
  std::string point_id;
  std::string question;
  std::string oracle_id;
};

enum class Dimension { Element, Page, Transition };
const char* dimension_name(Dimension d);

struct EvidenceSource {
  std::size_t index = 0;  // state index for element/page, action index for transition
  std::string text;
};

struct Evidence {
  Dimension dimension = Dimension::Element;
  std::vector<EvidenceSource> sources;
  std::string combined_text;
};

enum class PointOutcome { Passed, Failed, Inconclusive };
const char* point_outcome_name(PointOutcome o);

struct Verdict {
  std::string point_id;
  PointOutcome outcome = PointOutcome::Inconclusive;
  std::string explanation;
  std::vector<Evidence> evidence;

  bool passed() const { return outcome == PointOutcome::Passed; }
};

class DecompositionError : public Error {
 public:
  using Error::Error;
};

class EvidenceError : public Error {
 public:
  using Error::Error;
};

std::vector<VerificationPoint> decompose_oracle(const TestOracle& oracle, Gateway& gateway);

// What the extraction call picked: a subject phrase and log indices per
// dimension. Indices are validated against the log before rendering.
struct EvidenceSelection {
  std::string subject;
  std::vector<std::size_t> element_states;
  std::vector<std::size_t> page_states;
  std::vector<std::size_t> transitions;
};

// Textual digest of the log offered to the extraction call.
std::string log_overview(const InteractionLog& log);

// Deterministic rendering of a selection. Out-of-range indices are dropped
// and reported in `warnings`. An empty selection falls back to element
// evidence from the last state.
std::vector<Evidence> render_evidence(const EvidenceSelection& selection, const InteractionLog& log,
                                      std::vector<std::string>* warnings = nullptr);

std::vector<Evidence> extract_evidence(const VerificationPoint& point, const InteractionLog& log, Gateway& gateway,
                                       std::vector<std::string>* warnings = nullptr);

// Attaches the screenshot of the last state referenced by the evidence.
Verdict judge(const VerificationPoint& point, const std::vector<Evidence>& evidence, const InteractionLog& log,
              Gateway& gateway);

struct PointResult {
  VerificationPoint point;
  Verdict verdict;
};

struct OracleResult {
  TestOracle oracle;
  PointOutcome result = PointOutcome::Inconclusive;
  std::vector<PointResult> points;
  std::vector<std::string> warnings;
};

struct ReportTotals {
  int points = 0;
  int passed = 0;
  int failed = 0;
  int inconclusive = 0;
};

struct VerificationReport {
  std::vector<OracleResult> oracles;
  ReportTotals totals;
  Usage usage;

  bool all_passed() const;
};

VerificationReport verify(const std::vector<TestOracle>& oracles, const InteractionLog& log, Gateway& gateway);

nlohmann::json to_json(const VerificationReport& report);
void write_report(const VerificationReport& report, const std::filesystem::path& file);

// Oracle file: a JSON list of strings or of {oracle_id, text}, or plain text
// with one oracle per non-empty line.
std::vector<TestOracle> load_oracles(const std::filesystem::path& file);

}  // namespace guiagent
