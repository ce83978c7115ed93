#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "guiagent/errors.hpp"

namespace guiagent {

enum class Role { System, User, Assistant };
const char* role_name(Role role);

struct TextPart {
  std::string text;
};

struct ImagePart {
  std::vector<std::uint8_t> bytes;
  std::string media_type = "image/png";
};

using ContentPart = std::variant<TextPart, ImagePart>;

struct Message {
  Role role = Role::User;
  std::vector<ContentPart> parts;

  static Message text(Role role, std::string body);
};

struct ChatRequest {
  std::vector<Message> messages;
  bool structured_mode = false;
  std::optional<std::string> schema_hint;
  double temperature = 0.0;
  int max_output_tokens = 1024;
  // Which agent issued the call. Used for the ledger and for transcripts;
  // deliberately excluded from the fixture key.
  std::string agent = "unknown";

  // Concatenation of every text part, in message order.
  std::string all_text() const;
  // Throws PreconditionError when an invariant does not hold.
  void validate() const;
};

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
  friend bool operator==(const Usage&, const Usage&) = default;
};

struct ChatResponse {
  std::string text;
  Usage usage;
  std::string backend_id;
};

class GatewayError : public Error {
 public:
  using Error::Error;
};

// Transport-level failure; retriable by the caller.
class TransportError : public GatewayError {
 public:
  TransportError(const std::string& what, int attempts)
      : GatewayError(what + " (after " + std::to_string(attempts) + " attempt(s))"), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

class MalformedResponseError : public GatewayError {
 public:
  MalformedResponseError(const std::string& what, std::string raw)
      : GatewayError(what), raw_text_(std::move(raw)) {}
  const std::string& raw_text() const { return raw_text_; }

 private:
  std::string raw_text_;
};

// The offline backend has nothing for this request. Never a model failure.
class MissingFixtureError : public GatewayError {
 public:
  using GatewayError::GatewayError;
};

class ReplayMissError : public MissingFixtureError {
 public:
  explicit ReplayMissError(std::string digest)
      : MissingFixtureError("no replay fixture for request digest " + digest), digest_(std::move(digest)) {}
  const std::string& digest() const { return digest_; }

 private:
  std::string digest_;
};

// Stable content digest over the request, see fixture_key in gateway.cpp for
// exactly what is covered.
std::string fixture_key(const ChatRequest& request);

class UsageLedger {
 public:
  struct Entry {
    std::string agent_name;
    Usage usage;
  };

  void append(std::string agent_name, Usage usage);
  std::vector<Entry> entries() const;
  Usage totals() const;
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::vector<Entry> entries_;
  Usage totals_;
};

// A model backend. Implementations must be safe to call concurrently.
class Backend {
 public:
  virtual ~Backend() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
  virtual std::string id() const = 0;
};

struct GatewayOptions {
  int structured_retries = 2;
  int transport_retries = 2;
};

// Optional shape check applied to structured responses in addition to JSON
// parsing. Returns an empty string when the document is acceptable.
using ResponseValidator = std::function<std::string(const nlohmann::json& document)>;

struct Transcript {
  std::string agent;
  std::string request_digest;
  std::string prompt_text;
  std::string response_text;
  Usage usage;
};

class Gateway {
 public:
  explicit Gateway(std::shared_ptr<Backend> backend, GatewayOptions options = {});

  ChatResponse chat(const ChatRequest& request, const ResponseValidator& validator = {});

  const UsageLedger& ledger() const { return ledger_; }
  std::size_t call_count() const { return ledger_.size(); }

  // Every call issued since the last drain, oldest first.
  std::vector<Transcript> drain_transcripts();

  const GatewayOptions& options() const { return options_; }

 private:
  ChatResponse call_backend(const ChatRequest& request, int* attempts);

  std::shared_ptr<Backend> backend_;
  GatewayOptions options_;
  UsageLedger ledger_;
  std::mutex transcript_mu_;
  std::vector<Transcript> transcripts_;
};

// Parses a structured response body. Accepts a bare JSON object, or one
// wrapped in a ```json fence. Returns nullopt unless the text holds exactly
// one JSON object.
std::optional<nlohmann::json> extract_json_document(const std::string& text);

}  // namespace guiagent
