#include <atomic>
#include <thread>

#include <gtest/gtest.h>
#include <httplib.h>

#include "guiagent/backends.hpp"
#include "guiagent/digest.hpp"
#include "guiagent/gateway.hpp"
#include "support.hpp"

using namespace guiagent;
using nlohmann::json;
using testsupport::TempDir;

namespace {

ChatRequest simple_request(const std::string& text, bool structured = false) {
  ChatRequest r;
  r.agent = "tester";
  r.messages.push_back(Message::text(Role::System, "sys"));
  r.messages.push_back(Message::text(Role::User, text));
  if (structured) {
    r.structured_mode = true;
    r.schema_hint = R"({"ok": true})";
  }
  return r;
}

class FlakyBackend : public Backend {
 public:
  explicit FlakyBackend(int failures) : failures_(failures) {}
  ChatResponse complete(const ChatRequest&) override {
    ++calls;
    if (failures_-- > 0) throw TransportError("connection reset", 1);
    return {"fine", {3, 1}, "flaky"};
  }
  std::string id() const override { return "flaky"; }
  int calls = 0;

 private:
  int failures_;
};

}  // namespace

TEST(Digest, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex(std::string_view("abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  std::vector<std::uint8_t> bytes = {'h', 'i'};
  EXPECT_EQ(base64_encode(bytes), "aGk=");
}

TEST(Digest, FieldsAreLengthPrefixed) {
  DigestBuilder a, b;
  a.field("ab").field("c");
  b.field("a").field("bc");
  EXPECT_NE(a.hex(), b.hex());
}

TEST(ChatRequest, ValidateRejectsBrokenRequests) {
  ChatRequest r;
  EXPECT_THROW(r.validate(), PreconditionError);
  r = simple_request("x");
  r.structured_mode = true;
  EXPECT_THROW(r.validate(), PreconditionError);
  r = simple_request("x");
  r.temperature = 1.5;
  EXPECT_THROW(r.validate(), PreconditionError);
  r = simple_request("x");
  r.messages.back().parts.push_back(ImagePart{});
  EXPECT_THROW(r.validate(), PreconditionError);
  EXPECT_NO_THROW(simple_request("x").validate());
}

TEST(FixtureKey, StableAndSensitiveToContentButNotAgent) {
  auto a = simple_request("hello");
  auto b = simple_request("hello");
  b.agent = "someone-else";
  EXPECT_EQ(fixture_key(a), fixture_key(b));
  EXPECT_EQ(fixture_key(a).size(), 64u);
  auto c = simple_request("hello!");
  EXPECT_NE(fixture_key(a), fixture_key(c));
  auto d = simple_request("hello");
  d.messages.back().parts.push_back(ImagePart{{1, 2, 3}, "image/png"});
  auto e = simple_request("hello");
  e.messages.back().parts.push_back(ImagePart{{1, 2, 4}, "image/png"});
  EXPECT_NE(fixture_key(d), fixture_key(e));
  auto f = simple_request("hello", true);
  EXPECT_NE(fixture_key(a), fixture_key(f));
}

TEST(ExtractJson, AcceptsBareAndFencedObjects) {
  EXPECT_EQ((*extract_json_document(R"({"a": 1})"))["a"], 1);
  EXPECT_EQ((*extract_json_document("```json\n{\"a\": 2}\n```"))["a"], 2);
  EXPECT_FALSE(extract_json_document("not json"));
  EXPECT_FALSE(extract_json_document("[1, 2]"));
  EXPECT_FALSE(extract_json_document(R"({"a": 1} {"b": 2})"));
}

TEST(Gateway, StructuredRetryAppendsCorrectionAndSumsUsage) {
  std::vector<std::string> seen;
  int n = 0;
  auto backend = std::make_shared<CallbackBackend>([&](const ChatRequest& r) {
    seen.push_back(r.all_text());
    return ++n < 3 ? std::string("sorry, no JSON") : std::string(R"({"ok": true})");
  });
  Gateway gw(backend);
  auto resp = gw.chat(simple_request("go", true));
  EXPECT_EQ(resp.text, R"({"ok": true})");
  ASSERT_EQ(seen.size(), 3u);
  EXPECT_NE(seen[1].find("Correction 1"), std::string::npos);
  EXPECT_NE(seen[2].find("Correction 2"), std::string::npos);
  EXPECT_EQ(seen[2].find("Correction 1"), std::string::npos);
  ASSERT_EQ(gw.call_count(), 1u);
  auto transcripts = gw.drain_transcripts();
  ASSERT_EQ(transcripts.size(), 3u);
  Usage sum;
  for (const auto& t : transcripts) {
    sum.prompt_tokens += t.usage.prompt_tokens;
    sum.completion_tokens += t.usage.completion_tokens;
  }
  EXPECT_EQ(gw.ledger().totals(), sum);
  EXPECT_EQ(resp.usage, sum);
  EXPECT_TRUE(gw.drain_transcripts().empty());
}

TEST(Gateway, StructuredRetriesExhaustedRaisesMalformed) {
  auto backend = std::make_shared<CallbackBackend>([](const ChatRequest&) { return std::string("{}"); });
  Gateway gw(backend, {1, 0});
  auto validator = [](const json& d) { return d.contains("ok") ? std::string() : std::string("missing ok"); };
  try {
    gw.chat(simple_request("go", true), validator);
    FAIL() << "expected MalformedResponseError";
  } catch (const MalformedResponseError& e) {
    EXPECT_EQ(e.raw_text(), "{}");
    EXPECT_NE(std::string(e.what()).find("missing ok"), std::string::npos);
  }
  EXPECT_EQ(gw.drain_transcripts().size(), 2u);
  EXPECT_EQ(gw.call_count(), 1u);
}

TEST(Gateway, TransportRetries) {
  auto flaky = std::make_shared<FlakyBackend>(2);
  Gateway gw(flaky, {0, 2});
  EXPECT_EQ(gw.chat(simple_request("x")).text, "fine");
  EXPECT_EQ(flaky->calls, 3);

  auto dead = std::make_shared<FlakyBackend>(10);
  Gateway gw2(dead, {0, 1});
  try {
    gw2.chat(simple_request("x"));
    FAIL();
  } catch (const TransportError& e) {
    EXPECT_EQ(e.attempts(), 2);
  }
  EXPECT_EQ(dead->calls, 2);
}

TEST(Gateway, ConcurrentCallsKeepLedgerConsistent) {
  auto backend = std::make_shared<CallbackBackend>([](const ChatRequest&) { return std::string("abcd"); });
  Gateway gw(backend);
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&] {
      for (int i = 0; i < 25; ++i) gw.chat(simple_request("ping"));
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(gw.call_count(), 200u);
  EXPECT_EQ(gw.drain_transcripts().size(), 200u);
  Usage one = estimate_usage(simple_request("ping"), "abcd");
  EXPECT_EQ(gw.ledger().totals().prompt_tokens, one.prompt_tokens * 200);
}

TEST(Backends, EstimateUsage) {
  auto r = simple_request("12345");  // "sys" -> 1, "12345" -> 2
  r.messages.back().parts.push_back(ImagePart{{1}, "image/png"});
  auto u = estimate_usage(r, "123456789");
  EXPECT_EQ(u.prompt_tokens, 1 + 2 + 85);
  EXPECT_EQ(u.completion_tokens, 3);
}

TEST(Backends, RecordThenReplay) {
  TempDir dir;
  auto inner = std::make_shared<CallbackBackend>([](const ChatRequest& r) { return "echo:" + r.all_text(); });
  RecordingBackend rec(inner, dir.path());
  auto req = simple_request("hello");
  auto live = rec.complete(req);
  EXPECT_TRUE(std::filesystem::exists(dir / (fixture_key(req) + ".json")));

  ReplayBackend replay(dir.path());
  auto again = replay.complete(req);
  EXPECT_EQ(again.text, live.text);
  EXPECT_EQ(again.usage, live.usage);
  ASSERT_EQ(replay.hits().size(), 1u);
  EXPECT_EQ(replay.hits()[0].first, fixture_key(req));

  try {
    replay.complete(simple_request("never seen"));
    FAIL();
  } catch (const ReplayMissError& e) {
    EXPECT_EQ(e.digest(), fixture_key(simple_request("never seen")));
  }
}

TEST(Backends, CorruptFixtureIsGatewayError) {
  TempDir dir;
  auto req = simple_request("x");
  testsupport::spit(dir / (fixture_key(req) + ".json"), "{not json");
  ReplayBackend replay(dir.path());
  EXPECT_THROW(replay.complete(req), GatewayError);
}

TEST(Backends, ScriptedRulesMatchInOrderAndRepeatLast) {
  json rules = {{"rules",
                 {{{"agent", "a"}, {"contains", {"apple"}}, {"excludes", {"pear"}}, {"responses", {"one", "two"}}},
                  {{"agent", "a"}, {"responses", {{{"k", 1}}}}}}}};
  ScriptedBackend s(rules);
  auto req = simple_request("apple");
  req.agent = "a";
  EXPECT_EQ(s.complete(req).text, "one");
  EXPECT_EQ(s.complete(req).text, "two");
  EXPECT_EQ(s.complete(req).text, "two");
  auto other = simple_request("apple pear");
  other.agent = "a";
  EXPECT_EQ(json::parse(s.complete(other).text)["k"], 1);
  auto miss = simple_request("x");
  miss.agent = "b";
  EXPECT_THROW(s.complete(miss), ScriptMissError);
}

TEST(BackendConfig, ParsesKeysAndResolvesRelativePaths) {
  auto c = BackendConfig::parse("# comment\nbackend = replay\nfixtures = fx\nstructured_retries = 4\n", "/base");
  EXPECT_EQ(c.kind, "replay");
  EXPECT_EQ(c.fixtures, std::filesystem::path("/base/fx"));
  EXPECT_EQ(c.gateway.structured_retries, 4);
  EXPECT_THROW(BackendConfig::parse("bogus = 1\n", "/"), ConfigError);
  EXPECT_THROW(BackendConfig::parse("structured_retries = many\n", "/"), ConfigError);
  EXPECT_THROW(BackendConfig::parse("no equals sign\n", "/"), ConfigError);
}

TEST(BackendConfig, LiveBackendRequirements) {
  BackendConfig c;
  c.kind = "replay";
  EXPECT_THROW(make_live_backend(c), ConfigError);
  c.kind = "http";
  EXPECT_THROW(make_live_backend(c), ConfigError);
  c.kind = "telepathy";
  EXPECT_THROW(make_live_backend(c), ConfigError);
}

class HttpBackendTest : public ::testing::Test {
 protected:
  void SetUp() override {
    port_ = server_.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
      last_body_ = req.body;
      last_auth_ = req.get_header_value("Authorization");
      int n = hits_++;
      if (n < fail_first_) {
        res.status = 503;
        return;
      }
      res.set_content(
          R"({"choices":[{"message":{"role":"assistant","content":"{\"ok\": true}"}}],)"
          R"("usage":{"prompt_tokens":42,"completion_tokens":7}})",
          "application/json");
    });
    server_.Post("/bad", [](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"unexpected": true})", "application/json");
    });
    server_.Post("/denied", [](const httplib::Request&, httplib::Response& res) {
      res.status = 401;
      res.set_content("no", "text/plain");
    });
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }
  std::string url(const std::string& path) { return "http://127.0.0.1:" + std::to_string(port_) + path; }

  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> hits_{0};
  int fail_first_ = 0;
  std::string last_body_;
  std::string last_auth_;
};

TEST_F(HttpBackendTest, SendsChatCompletionAndParsesUsage) {
  auto backend = std::make_shared<HttpBackend>(HttpBackendConfig{url("/v1/chat/completions"), "sk-test", "m1", 5000});
  Gateway gw(backend);
  auto req = simple_request("hi", true);
  req.messages.back().parts.push_back(ImagePart{{'h', 'i'}, "image/png"});
  auto resp = gw.chat(req);
  EXPECT_EQ(resp.text, R"({"ok": true})");
  EXPECT_EQ(resp.usage, (Usage{42, 7}));
  EXPECT_EQ(last_auth_, "Bearer sk-test");
  auto body = json::parse(last_body_);
  EXPECT_EQ(body["model"], "m1");
  EXPECT_EQ(body["response_format"]["type"], "json_object");
  EXPECT_EQ(body["messages"][1]["content"][1]["image_url"]["url"], "data:image/png;base64,aGk=");
}

TEST_F(HttpBackendTest, RetriesServerErrors) {
  fail_first_ = 2;
  auto backend = std::make_shared<HttpBackend>(HttpBackendConfig{url("/v1/chat/completions"), "", "m", 5000});
  Gateway gw(backend, {0, 2});
  EXPECT_EQ(gw.chat(simple_request("x")).usage.prompt_tokens, 42);
  EXPECT_EQ(hits_.load(), 3);
}

TEST_F(HttpBackendTest, ErrorClassification) {
  Gateway bad(std::make_shared<HttpBackend>(HttpBackendConfig{url("/bad"), "", "m", 5000}));
  EXPECT_THROW(bad.chat(simple_request("x")), MalformedResponseError);
  Gateway denied(std::make_shared<HttpBackend>(HttpBackendConfig{url("/denied"), "", "m", 5000}));
  try {
    denied.chat(simple_request("x"));
    FAIL();
  } catch (const TransportError&) {
    FAIL() << "401 is not retriable";
  } catch (const GatewayError&) {
  }
}

TEST(HttpBackendOffline, ConnectionRefusedIsTransportError) {
  httplib::Server probe;
  int port = probe.bind_to_any_port("127.0.0.1");
  probe.stop();
  Gateway gw(std::make_shared<HttpBackend>(
                 HttpBackendConfig{"http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions", "", "m", 1000}),
             {0, 1});
  EXPECT_THROW(gw.chat(simple_request("x")), TransportError);
}
