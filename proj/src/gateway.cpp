#include "guiagent/gateway.hpp"

#include <algorithm>

#include "guiagent/digest.hpp"

namespace guiagent {

const char* role_name(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

Message Message::text(Role role, std::string body) {
  Message m;
  m.role = role;
  m.parts.emplace_back(TextPart{std::move(body)});
  return m;
}

std::string ChatRequest::all_text() const {
  std::string out;
  for (const auto& m : messages) {
    for (const auto& p : m.parts) {
      if (const auto* t = std::get_if<TextPart>(&p)) {
        if (!out.empty()) out.push_back('\n');
        out += t->text;
      }
    }
  }
  return out;
}

void ChatRequest::validate() const {
  if (messages.empty()) throw PreconditionError("chat request has no messages");
  for (const auto& m : messages) {
    for (const auto& p : m.parts) {
      if (const auto* img = std::get_if<ImagePart>(&p); img != nullptr && img->bytes.empty()) {
        throw PreconditionError("chat request carries an empty image part");
      }
    }
  }
  if (structured_mode != schema_hint.has_value()) {
    throw PreconditionError("schema_hint must be present exactly when structured_mode is set");
  }
  if (temperature < 0.0 || temperature > 1.0) throw PreconditionError("temperature outside [0,1]");
  if (max_output_tokens <= 0) throw PreconditionError("max_output_tokens must be positive");
}

// Covers role sequence, text parts, image digests, structured_mode and
// schema_hint. Temperature, token limits and the agent tag are excluded.
std::string fixture_key(const ChatRequest& request) {
  DigestBuilder d;
  d.field("chat-request/v1");
  for (const auto& m : request.messages) {
    d.field("message").field(role_name(m.role));
    for (const auto& p : m.parts) {
      if (const auto* t = std::get_if<TextPart>(&p)) {
        d.field("text").field(t->text);
      } else {
        const auto& img = std::get<ImagePart>(p);
        d.field("image").field(img.media_type).field(sha256_hex(img.bytes));
      }
    }
  }
  d.field(request.structured_mode ? "structured" : "free");
  d.field(request.schema_hint.value_or(""));
  return d.hex();
}

void UsageLedger::append(std::string agent_name, Usage usage) {
  std::lock_guard lock(mu_);
  totals_.prompt_tokens += usage.prompt_tokens;
  totals_.completion_tokens += usage.completion_tokens;
  entries_.push_back({std::move(agent_name), usage});
}

std::vector<UsageLedger::Entry> UsageLedger::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

Usage UsageLedger::totals() const {
  std::lock_guard lock(mu_);
  return totals_;
}

std::size_t UsageLedger::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

Gateway::Gateway(std::shared_ptr<Backend> backend, GatewayOptions options)
    : backend_(std::move(backend)), options_(options) {
  if (!backend_) throw ConfigError("gateway requires a backend");
}

ChatResponse Gateway::call_backend(const ChatRequest& request, int* attempts) {
  for (;;) {
    ++*attempts;
    try {
      return backend_->complete(request);
    } catch (const TransportError& e) {
      if (*attempts > options_.transport_retries) throw TransportError(e.what(), *attempts);
    }
  }
}

ChatResponse Gateway::chat(const ChatRequest& request, const ResponseValidator& validator) {
  request.validate();
  ChatRequest current = request;
  Usage spent;
  int attempts = 0;
  for (int round = 0;; ++round) {
    ChatResponse resp;
    try {
      resp = call_backend(current, &attempts);
    } catch (...) {
      ledger_.append(request.agent, spent);
      throw;
    }
    spent.prompt_tokens += resp.usage.prompt_tokens;
    spent.completion_tokens += resp.usage.completion_tokens;
    {
      std::lock_guard lock(transcript_mu_);
      transcripts_.push_back({request.agent, fixture_key(current), current.all_text(), resp.text, resp.usage});
    }
    if (!request.structured_mode) {
      ledger_.append(request.agent, spent);
      resp.usage = spent;
      return resp;
    }

    std::string problem;
    auto doc = extract_json_document(resp.text);
    if (!doc) {
      problem = "the reply is not a single JSON object";
    } else if (validator) {
      problem = validator(*doc);
    }
    if (problem.empty()) {
      ledger_.append(request.agent, spent);
      resp.usage = spent;
      return resp;
    }
    if (round >= options_.structured_retries) {
      ledger_.append(request.agent, spent);
      throw MalformedResponseError(request.agent + ": malformed structured response after " +
                                       std::to_string(round + 1) + " attempt(s): " + problem,
                                   resp.text);
    }
    current = request;
    current.messages.push_back(Message::text(
        Role::User, "Correction " + std::to_string(round + 1) + ": your previous reply could not be used (" +
                        problem + "). Reply with one JSON object and nothing else, shaped as: " +
                        *request.schema_hint));
  }
}

std::vector<Transcript> Gateway::drain_transcripts() {
  std::lock_guard lock(transcript_mu_);
  std::vector<Transcript> out;
  out.swap(transcripts_);
  return out;
}

std::optional<nlohmann::json> extract_json_document(const std::string& text) {
  std::string_view body = text;
  auto fence = body.find("```");
  if (fence != std::string_view::npos) {
    auto start = body.find('\n', fence);
    auto end = start == std::string_view::npos ? start : body.find("```", start);
    if (start == std::string_view::npos || end == std::string_view::npos) return std::nullopt;
    body = body.substr(start + 1, end - start - 1);
  }
  try {
    auto doc = nlohmann::json::parse(body);
    if (!doc.is_object()) return std::nullopt;
    return doc;
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

}  // namespace guiagent
