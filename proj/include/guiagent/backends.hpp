#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "guiagent/gateway.hpp"

namespace guiagent {

// Rough token estimate used by offline backends: ceil(chars / 4) per text
// part plus a flat 85 per image.
Usage estimate_usage(const ChatRequest& request, const std::string& response_text);

// Serves responses from <dir>/<digest>.json. Never touches the network.
class ReplayBackend : public Backend {
 public:
  explicit ReplayBackend(std::filesystem::path dir);
  ChatResponse complete(const ChatRequest& request) override;
  std::string id() const override { return "replay"; }

  // Digest and usage of every fixture served, in call order.
  std::vector<std::pair<std::string, Usage>> hits() const;

 private:
  std::filesystem::path dir_;
  mutable std::mutex mu_;
  std::vector<std::pair<std::string, Usage>> hits_;
};

// Proxies another backend and writes one fixture per call.
class RecordingBackend : public Backend {
 public:
  RecordingBackend(std::shared_ptr<Backend> inner, std::filesystem::path dir);
  ChatResponse complete(const ChatRequest& request) override;
  std::string id() const override { return "record:" + inner_->id(); }

 private:
  std::shared_ptr<Backend> inner_;
  std::filesystem::path dir_;
  std::mutex write_mu_;
};

struct HttpBackendConfig {
  std::string endpoint;  // e.g. https://api.example.com/v1/chat/completions
  std::string api_key;
  std::string model = "gpt-4o";
  int timeout_ms = 120000;
};

// OpenAI-compatible chat-completions client.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);
  ChatResponse complete(const ChatRequest& request) override;
  std::string id() const override { return "http:" + config_.model; }

  // Request body as sent on the wire.
  nlohmann::json build_body(const ChatRequest& request) const;

 private:
  HttpBackendConfig config_;
  std::string origin_;
  std::string path_;
};

class ScriptMissError : public MissingFixtureError {
 public:
  using MissingFixtureError::MissingFixtureError;
};

// Deterministic stand-in model driven by a rule file:
//   {"rules": [{"agent": "selector", "contains": ["..."], "excludes": ["..."],
//               "responses": [<text or object>, ...]}]}
// The first rule whose agent matches and whose substrings are all present
// (and none of the excluded ones) answers. A rule with several responses
// hands them out in order and then repeats the last one.
class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(nlohmann::json rules);
  static std::shared_ptr<ScriptedBackend> from_file(const std::filesystem::path& path);

  ChatResponse complete(const ChatRequest& request) override;
  std::string id() const override { return "scripted"; }

 private:
  struct Rule {
    std::string agent;
    std::vector<std::string> contains;
    std::vector<std::string> excludes;
    std::vector<std::string> responses;
    std::size_t served = 0;
  };
  std::mutex mu_;
  std::vector<Rule> rules_;
};

// Wraps a callable; handy in tests.
class CallbackBackend : public Backend {
 public:
  using Fn = std::function<std::string(const ChatRequest&)>;
  explicit CallbackBackend(Fn fn) : fn_(std::move(fn)) {}
  ChatResponse complete(const ChatRequest& request) override;
  std::string id() const override { return "callback"; }

 private:
  Fn fn_;
};

// Key-value backend configuration:
//   backend = replay | http | scripted
//   fixtures = <dir>            (replay source / record target)
//   endpoint, api_key, model, timeout_ms   (http)
//   script = <rules.json>      (scripted)
//   structured_retries, transport_retries
// Environment variables GUIAGENT_BACKEND, GUIAGENT_FIXTURES,
// GUIAGENT_ENDPOINT, GUIAGENT_API_KEY, GUIAGENT_MODEL and GUIAGENT_SCRIPT
// override the file. Relative paths resolve against the file's directory.
struct BackendConfig {
  std::string kind = "replay";
  std::filesystem::path fixtures;
  std::filesystem::path script;
  HttpBackendConfig http;
  GatewayOptions gateway;

  static BackendConfig load(const std::filesystem::path& path);
  static BackendConfig parse(const std::string& text, const std::filesystem::path& base_dir);
  void apply_environment();
};

// Backend for the configured kind, with no recording.
std::shared_ptr<Backend> make_live_backend(const BackendConfig& config);

}  // namespace guiagent
