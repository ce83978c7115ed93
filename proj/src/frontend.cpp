#include "guiagent/frontend.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace guiagent {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFrontendSystem =
    "You read GUI test requirements. Separate the interaction commands (what to do in the app) from the test "
    "oracles (what must be checked). Keep the original wording. A requirement may have no oracles.";
constexpr const char* kFrontendSchema = R"({"commands": "<interaction commands>", "oracles": ["<oracle>", ...]})";

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

std::string validate_split(const json& d) {
  if (!d.contains("commands") || !d["commands"].is_string()) return "'commands' must be a string";
  if (blank(d["commands"].get<std::string>())) return "'commands' must not be empty";
  if (d.contains("oracles")) {
    if (!d["oracles"].is_array()) return "'oracles' must be a list";
    std::set<std::string> seen;
    for (const auto& o : d["oracles"]) {
      if (!o.is_string() || blank(o.get<std::string>())) return "'oracles' entries must be non-empty strings";
      if (!seen.insert(o.get<std::string>()).second) return "'oracles' entries must be distinct";
    }
  }
  return {};
}

}  // namespace

SplitRequirement split_requirement(const TestRequirement& req, Gateway& gateway) {
  if (blank(req.raw_text)) throw PreconditionError("test requirement is empty");
  ChatRequest chat;
  chat.agent = "frontend";
  chat.structured_mode = true;
  chat.schema_hint = kFrontendSchema;
  chat.messages.push_back(Message::text(Role::System, kFrontendSystem));
  chat.messages.push_back(Message::text(Role::User, "Requirement:\n" + req.raw_text));
  json doc;
  try {
    doc = *extract_json_document(gateway.chat(chat, validate_split).text);
  } catch (const MalformedResponseError& e) {
    throw FrontendError(std::string("cannot split requirement: ") + e.what());
  }
  SplitRequirement out;
  out.commands_text = doc["commands"].get<std::string>();
  const std::string prefix = req.id.empty() ? "O" : req.id + ".O";
  for (const auto& o : doc.value("oracles", json::array())) {
    out.oracles.push_back({prefix + std::to_string(out.oracles.size() + 1), o.get<std::string>()});
  }
  return out;
}

std::vector<TestRequirement> load_requirements(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ConfigError("cannot read requirement file " + file.string());
  std::stringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  if (text.rfind("\xEF\xBB\xBF", 0) == 0) text.erase(0, 3);

  std::vector<TestRequirement> out;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) throw ConfigError("requirement file " + file.string() + " is empty");
  if (text[first] != '[') {
    out.push_back({file.stem().string(), "", text, file.string(), ""});
    return out;
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("malformed requirement batch " + file.string() + ": " + e.what());
  }
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& item = doc[i];
    if (!item.is_object() || !item.contains("text") || !item["text"].is_string() ||
        blank(item["text"].get<std::string>())) {
      throw ConfigError("requirement batch " + file.string() + ": [" + std::to_string(i) + "].text missing or empty");
    }
    TestRequirement r;
    r.id = item.value("id", "R" + std::to_string(i + 1));
    r.app = item.value("app", std::string());
    r.raw_text = item["text"].get<std::string>();
    r.source = item.value("source", file.string());
    r.owner = item.value("owner", std::string());
    out.push_back(std::move(r));
  }
  if (out.empty()) throw ConfigError("requirement batch " + file.string() + " is empty");
  return out;
}

}  // namespace guiagent
