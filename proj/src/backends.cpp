#include "guiagent/backends.hpp"

#include <httplib.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "guiagent/digest.hpp"

namespace guiagent {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::int64_t quarter_ceil(std::size_t n) { return static_cast<std::int64_t>((n + 3) / 4); }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim(std::string s) {
  auto b = s.find_first_not_of(" \t\r");
  auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

}  // namespace

Usage estimate_usage(const ChatRequest& request, const std::string& response_text) {
  Usage u;
  for (const auto& m : request.messages) {
    for (const auto& p : m.parts) {
      if (const auto* t = std::get_if<TextPart>(&p)) {
        u.prompt_tokens += quarter_ceil(t->text.size());
      } else {
        u.prompt_tokens += 85;
      }
    }
  }
  u.completion_tokens = quarter_ceil(response_text.size());
  return u;
}

ReplayBackend::ReplayBackend(fs::path dir) : dir_(std::move(dir)) {}

ChatResponse ReplayBackend::complete(const ChatRequest& request) {
  const std::string key = fixture_key(request);
  const fs::path file = dir_ / (key + ".json");
  std::ifstream in(file);
  if (!in) throw ReplayMissError(key);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw GatewayError("corrupt fixture " + file.string() + ": " + e.what());
  }
  ChatResponse resp;
  try {
    resp.text = doc.at("response_text").get<std::string>();
    resp.usage.prompt_tokens = doc.at("usage").at("prompt_tokens").get<std::int64_t>();
    resp.usage.completion_tokens = doc.at("usage").at("completion_tokens").get<std::int64_t>();
  } catch (const json::exception& e) {
    throw GatewayError("corrupt fixture " + file.string() + ": " + e.what());
  }
  if (resp.usage.prompt_tokens < 0 || resp.usage.completion_tokens < 0) {
    throw GatewayError("fixture " + file.string() + " has negative usage");
  }
  resp.backend_id = id();
  std::lock_guard lock(mu_);
  hits_.emplace_back(key, resp.usage);
  return resp;
}

std::vector<std::pair<std::string, Usage>> ReplayBackend::hits() const {
  std::lock_guard lock(mu_);
  return hits_;
}

RecordingBackend::RecordingBackend(std::shared_ptr<Backend> inner, fs::path dir)
    : inner_(std::move(inner)), dir_(std::move(dir)) {}

ChatResponse RecordingBackend::complete(const ChatRequest& request) {
  ChatResponse resp = inner_->complete(request);
  const std::string key = fixture_key(request);
  json doc = {{"request_digest", key},
              {"response_text", resp.text},
              {"usage", {{"prompt_tokens", resp.usage.prompt_tokens},
                         {"completion_tokens", resp.usage.completion_tokens}}}};
  std::lock_guard lock(write_mu_);
  fs::create_directories(dir_);
  std::ofstream out(dir_ / (key + ".json"));
  out << doc.dump(2) << '\n';
  if (!out) throw GatewayError("cannot write fixture for " + key);
  return resp;
}

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  if (config_.endpoint.empty()) throw ConfigError("http backend requires an endpoint");
  auto scheme = config_.endpoint.find("://");
  if (scheme == std::string::npos) throw ConfigError("endpoint must be an absolute URL: " + config_.endpoint);
  auto slash = config_.endpoint.find('/', scheme + 3);
  origin_ = config_.endpoint.substr(0, slash);
  path_ = slash == std::string::npos ? "/v1/chat/completions" : config_.endpoint.substr(slash);
}

json HttpBackend::build_body(const ChatRequest& request) const {
  json messages = json::array();
  for (const auto& m : request.messages) {
    json content = json::array();
    for (const auto& p : m.parts) {
      if (const auto* t = std::get_if<TextPart>(&p)) {
        content.push_back({{"type", "text"}, {"text", t->text}});
      } else {
        const auto& img = std::get<ImagePart>(p);
        content.push_back({{"type", "image_url"},
                           {"image_url", {{"url", "data:" + img.media_type + ";base64," + base64_encode(img.bytes)}}}});
      }
    }
    messages.push_back({{"role", role_name(m.role)}, {"content", std::move(content)}});
  }
  json body = {{"model", config_.model},
               {"messages", std::move(messages)},
               {"temperature", request.temperature},
               {"max_tokens", request.max_output_tokens}};
  if (request.structured_mode) body["response_format"] = {{"type", "json_object"}};
  return body;
}

ChatResponse HttpBackend::complete(const ChatRequest& request) {
  httplib::Client client(origin_);
  auto secs = config_.timeout_ms / 1000;
  auto usecs = (config_.timeout_ms % 1000) * 1000;
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  auto res = client.Post(path_, headers, build_body(request).dump(), "application/json");
  if (!res) throw TransportError("POST " + config_.endpoint + " failed: " + httplib::to_string(res.error()), 1);
  if (res->status >= 500 || res->status == 429) {
    throw TransportError("POST " + config_.endpoint + " returned HTTP " + std::to_string(res->status), 1);
  }
  if (res->status != 200) {
    throw GatewayError("POST " + config_.endpoint + " returned HTTP " + std::to_string(res->status) + ": " +
                       res->body.substr(0, 200));
  }
  try {
    auto doc = json::parse(res->body);
    ChatResponse out;
    const auto& content = doc.at("choices").at(0).at("message").at("content");
    out.text = content.is_null() ? std::string() : content.get<std::string>();
    if (doc.contains("usage")) {
      out.usage.prompt_tokens = doc["usage"].value("prompt_tokens", std::int64_t{0});
      out.usage.completion_tokens = doc["usage"].value("completion_tokens", std::int64_t{0});
    }
    out.backend_id = id();
    return out;
  } catch (const json::exception& e) {
    throw MalformedResponseError(std::string("unexpected chat-completions body: ") + e.what(), res->body);
  }
}

ScriptedBackend::ScriptedBackend(json rules) {
  if (!rules.contains("rules") || !rules["rules"].is_array()) throw ConfigError("script must hold a rules array");
  for (const auto& r : rules["rules"]) {
    Rule rule;
    rule.agent = r.value("agent", std::string());
    for (const auto& c : r.value("contains", json::array())) rule.contains.push_back(c.get<std::string>());
    for (const auto& c : r.value("excludes", json::array())) rule.excludes.push_back(c.get<std::string>());
    json responses = r.contains("responses") ? r["responses"] : json::array({r.at("response")});
    for (const auto& resp : responses) {
      rule.responses.push_back(resp.is_string() ? resp.get<std::string>() : resp.dump());
    }
    if (rule.responses.empty()) throw ConfigError("script rule without responses");
    rules_.push_back(std::move(rule));
  }
}

std::shared_ptr<ScriptedBackend> ScriptedBackend::from_file(const fs::path& path) {
  try {
    return std::make_shared<ScriptedBackend>(json::parse(read_file(path)));
  } catch (const json::exception& e) {
    throw ConfigError("bad script " + path.string() + ": " + e.what());
  }
}

ChatResponse ScriptedBackend::complete(const ChatRequest& request) {
  const std::string text = request.all_text();
  std::lock_guard lock(mu_);
  for (auto& rule : rules_) {
    if (!rule.agent.empty() && rule.agent != request.agent) continue;
    bool ok = std::all_of(rule.contains.begin(), rule.contains.end(),
                          [&](const std::string& s) { return text.find(s) != std::string::npos; });
    ok = ok && std::none_of(rule.excludes.begin(), rule.excludes.end(),
                            [&](const std::string& s) { return text.find(s) != std::string::npos; });
    if (!ok) continue;
    std::size_t i = std::min(rule.served, rule.responses.size() - 1);
    ++rule.served;
    ChatResponse out;
    out.text = rule.responses[i];
    out.usage = estimate_usage(request, out.text);
    out.backend_id = id();
    return out;
  }
  throw ScriptMissError("scripted backend has no rule for agent '" + request.agent + "'");
}

ChatResponse CallbackBackend::complete(const ChatRequest& request) {
  ChatResponse out;
  out.text = fn_(request);
  out.usage = estimate_usage(request, out.text);
  out.backend_id = id();
  return out;
}

BackendConfig BackendConfig::load(const fs::path& path) {
  return parse(read_file(path), path.parent_path());
}

BackendConfig BackendConfig::parse(const std::string& text, const fs::path& base_dir) {
  BackendConfig cfg;
  auto resolve = [&](const std::string& v) {
    fs::path p(v);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  };
  auto as_int = [](const std::string& key, const std::string& v) {
    try {
      return std::stoi(v);
    } catch (const std::exception&) {
      throw ConfigError("config key '" + key + "' expects an integer, got '" + v + "'");
    }
  };
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key == "backend") cfg.kind = value;
    else if (key == "fixtures") cfg.fixtures = resolve(value);
    else if (key == "script") cfg.script = resolve(value);
    else if (key == "endpoint") cfg.http.endpoint = value;
    else if (key == "api_key") cfg.http.api_key = value;
    else if (key == "model") cfg.http.model = value;
    else if (key == "timeout_ms") cfg.http.timeout_ms = as_int(key, value);
    else if (key == "structured_retries") cfg.gateway.structured_retries = as_int(key, value);
    else if (key == "transport_retries") cfg.gateway.transport_retries = as_int(key, value);
    else throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  cfg.apply_environment();
  return cfg;
}

void BackendConfig::apply_environment() {
  auto env = [](const char* name) -> const char* {
    const char* v = std::getenv(name);
    return v != nullptr && *v != '\0' ? v : nullptr;
  };
  if (auto* v = env("GUIAGENT_BACKEND")) kind = v;
  if (auto* v = env("GUIAGENT_FIXTURES")) fixtures = v;
  if (auto* v = env("GUIAGENT_SCRIPT")) script = v;
  if (auto* v = env("GUIAGENT_ENDPOINT")) http.endpoint = v;
  if (auto* v = env("GUIAGENT_API_KEY")) http.api_key = v;
  if (auto* v = env("GUIAGENT_MODEL")) http.model = v;
}

std::shared_ptr<Backend> make_live_backend(const BackendConfig& config) {
  if (config.kind == "replay") {
    if (config.fixtures.empty()) throw ConfigError("replay backend requires 'fixtures'");
    if (!fs::is_directory(config.fixtures)) throw ConfigError("fixture directory not found: " + config.fixtures.string());
    return std::make_shared<ReplayBackend>(config.fixtures);
  }
  if (config.kind == "http") return std::make_shared<HttpBackend>(config.http);
  if (config.kind == "scripted") {
    if (config.script.empty()) throw ConfigError("scripted backend requires 'script'");
    return ScriptedBackend::from_file(config.script);
  }
  throw ConfigError("unknown backend kind '" + config.kind + "'");
}

}  // namespace guiagent
