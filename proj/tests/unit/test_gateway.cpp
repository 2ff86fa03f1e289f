#include <gtest/gtest.h>

#include <httplib.h>

#include <atomic>
#include <functional>
#include <random>
#include <thread>

#include "aipat/error.hpp"
#include "aipat/gateway/http_providers.hpp"
#include "aipat/gateway/mock_provider.hpp"
#include "aipat/json_io.hpp"

using namespace aipat;
using namespace aipat::gateway;
using namespace std::chrono_literals;

namespace {

ChatRequest request(std::string user = "grade this") {
  ChatRequest r;
  r.system_message = "You grade.";
  r.user_message = std::move(user);
  r.model = "m";
  r.max_attempts = 4;
  return r;
}

ProviderPolicy fast_policy() {
  ProviderPolicy p;
  p.requests_per_minute = 1000;
  p.initial_backoff = 100ms;
  p.backoff_factor = 2.0;
  p.max_backoff = 250ms;
  return p;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no aipat::Error thrown";
  return ErrorKind::io;
}

}  // namespace

TEST(ChatRequest, DigestCoversEveryField) {
  const auto base = request();
  EXPECT_EQ(base.digest(), request().digest());
  EXPECT_EQ(base.digest().size(), 64u);
  auto t = base;
  t.temperature = Decimal::from_hundredths(1);
  auto p = base;
  p.passthrough["seed"] = "1";
  auto a = base;
  a.attachments.push_back({"image/png", {1, 2, 3}});
  auto m = base;
  m.max_attempts = 5;
  for (const auto* other : {&t, &p, &a, &m}) EXPECT_NE(other->digest(), base.digest());
}

TEST(ChatRequest, Validation) {
  auto r = request();
  r.system_message.clear();
  EXPECT_EQ(kind_of([&] { r.validate(); }), ErrorKind::validation);
  r = request();
  r.temperature = -Decimal(1);
  EXPECT_EQ(kind_of([&] { r.validate(); }), ErrorKind::validation);
  r = request();
  r.max_attempts = 0;
  EXPECT_EQ(kind_of([&] { r.validate(); }), ErrorKind::validation);
}

TEST(ProviderHandle, RetriesWithExponentialBackoffOnVirtualClock) {
  ManualClock clock;
  auto mock = std::make_shared<MockProvider>();
  mock->script(request().digest(), {MockOutcome::timeout(), MockOutcome::rate_limited(), MockOutcome::transport(),
                                    MockOutcome::reply("done")});
  ProviderHandle h(mock, fast_policy(), clock);
  const auto start = clock.now();
  const auto resp = h.complete(request());
  EXPECT_EQ(resp.raw_text, "done");
  EXPECT_EQ(resp.attempt_count, 4);
  EXPECT_EQ(resp.request_digest, request().digest());
  // 100 + 200 + 250 (capped)
  EXPECT_EQ(clock.now() - start, 550ms);
  EXPECT_EQ(mock->call_count(), 4);
}

TEST(ProviderHandle, ExhaustionAndAuthAreTyped) {
  ManualClock clock;
  auto mock = std::make_shared<MockProvider>();
  mock->script(request("a").digest(), {MockOutcome::timeout()});
  mock->script(request("b").digest(), {MockOutcome::auth()});
  ProviderHandle h(mock, fast_policy(), clock);
  EXPECT_EQ(kind_of([&] { h.complete(request("a")); }), ErrorKind::retries_exhausted);
  EXPECT_EQ(mock->call_count(), 4);
  EXPECT_EQ(kind_of([&] { h.complete(request("b")); }), ErrorKind::provider_auth);
  EXPECT_EQ(mock->call_count(), 5);  // auth is never retried
}

TEST(RateLimiter, SlidingWindowAdmitsAtMostLimitPerMinute) {
  ManualClock clock;
  RateLimiter limiter(3, clock);
  const auto start = clock.now();
  for (int i = 0; i < 3; ++i) limiter.acquire();
  EXPECT_EQ(clock.now(), start);
  limiter.acquire();
  EXPECT_EQ(clock.now() - start, 60s);
  EXPECT_EQ(kind_of([&] { RateLimiter bad(0, clock); }), ErrorKind::validation);
}

TEST(RateLimiter, WindowPropertyOverRandomArrivals) {
  ManualClock clock;
  RateLimiter limiter(5, clock);
  std::vector<Timestamp> admitted;
  std::mt19937 rng(3);
  for (int i = 0; i < 200; ++i) {
    clock.advance(std::chrono::milliseconds(rng() % 9000));
    limiter.acquire();
    admitted.push_back(clock.now());
  }
  for (std::size_t i = 5; i < admitted.size(); ++i) EXPECT_GE(admitted[i] - admitted[i - 5], 60s);
}

TEST(ProviderHandle, ParallelismIsBounded) {
  class Slow final : public Provider {
   public:
    std::string id() const override { return "slow"; }
    std::string send(const ChatRequest&) override {
      const int now = ++inflight;
      int prev = peak.load();
      while (now > prev && !peak.compare_exchange_weak(prev, now)) {
      }
      std::this_thread::sleep_for(5ms);
      --inflight;
      return "ok";
    }
    std::atomic<int> inflight{0};
    std::atomic<int> peak{0};
  };
  auto slow = std::make_shared<Slow>();
  auto policy = fast_policy();
  policy.parallelism = 2;
  ProviderHandle h(slow, policy, system_clock());
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) threads.emplace_back([&] { h.complete(request()); });
  for (auto& t : threads) t.join();
  EXPECT_LE(slow->peak.load(), 2);
}

TEST(ProviderRegistry, LookupByName) {
  ProviderRegistry reg;
  reg.add(std::make_shared<ProviderHandle>(std::make_shared<MockProvider>("a"), fast_policy(), system_clock()));
  EXPECT_TRUE(reg.contains("a"));
  EXPECT_EQ(reg.get("a").id(), "a");
  EXPECT_EQ(kind_of([&] { reg.get("zz"); }), ErrorKind::not_found);
}

TEST(MockProvider, ScriptsAndFallback) {
  MockProvider mock;
  mock.script_when([](const ChatRequest& r) { return r.user_message == "x"; }, {MockOutcome::reply("1"), MockOutcome::reply("2")});
  mock.set_fallback([](const ChatRequest&) { return std::string("fallback"); });
  EXPECT_EQ(mock.send(request("x")), "1");
  EXPECT_EQ(mock.send(request("x")), "2");
  EXPECT_EQ(mock.send(request("x")), "2");  // last outcome repeats
  EXPECT_EQ(mock.send(request("y")), "fallback");
  EXPECT_EQ(mock.history().size(), 4u);
}

TEST(HttpAdapters, OpenAiBody) {
  auto r = request();
  r.temperature = Decimal::from_hundredths(70);
  r.passthrough["top_p"] = "0.9";
  r.passthrough["user"] = "grader";
  const auto body = Json::parse(build_request_body(WireProtocol::openai_chat, r));
  EXPECT_EQ(body["model"], "m");
  EXPECT_DOUBLE_EQ(body["temperature"].get<double>(), 0.7);
  EXPECT_EQ(body["messages"][0]["role"], "system");
  EXPECT_EQ(body["messages"][1]["content"], "grade this");
  EXPECT_DOUBLE_EQ(body["top_p"].get<double>(), 0.9);
  EXPECT_EQ(body["user"], "grader");
}

TEST(HttpAdapters, GeminiBodyWithAttachment) {
  auto r = request();
  r.attachments.push_back({"image/png", {'h', 'i'}});
  const auto body = Json::parse(build_request_body(WireProtocol::gemini_generate, r));
  EXPECT_EQ(body["systemInstruction"]["parts"][0]["text"], "You grade.");
  EXPECT_EQ(body["contents"][0]["parts"][1]["inlineData"]["data"], "aGk=");
  EXPECT_EQ(body["contents"][0]["parts"][1]["inlineData"]["mimeType"], "image/png");
}

TEST(HttpAdapters, ExtractReplyText) {
  EXPECT_EQ(extract_reply_text(WireProtocol::openai_chat, R"({"choices":[{"message":{"content":"hi"}}]})"), "hi");
  EXPECT_EQ(extract_reply_text(WireProtocol::gemini_generate,
                               R"({"candidates":[{"content":{"parts":[{"text":"a"},{"text":"b"}]}}]})"),
            "ab");
  EXPECT_THROW(extract_reply_text(WireProtocol::openai_chat, "{}"), ProviderError);
  EXPECT_THROW(extract_reply_text(WireProtocol::openai_chat, "not json"), ProviderError);
}

TEST(HttpProvider, StatusCodesMapToFailures) {
  httplib::Server server;
  std::atomic<int> status{200};
  std::string seen_auth;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_auth = req.get_header_value("Authorization");
    res.status = status.load();
    res.set_content(R"({"choices":[{"message":{"content":"pong"}}]})", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpProviderConfig cfg;
  cfg.id = "local";
  cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
  cfg.api_key = "sk-test";
  cfg.timeout = 5s;
  auto provider = make_http_provider(cfg);
  EXPECT_EQ(provider->send(request()), "pong");
  EXPECT_EQ(seen_auth, "Bearer sk-test");

  auto failure_for = [&](int code) {
    status = code;
    try {
      provider->send(request());
    } catch (const ProviderError& e) {
      return e.failure();
    }
    ADD_FAILURE() << "no ProviderError for " << code;
    return ProviderFailure::bad_request;
  };
  EXPECT_EQ(failure_for(401), ProviderFailure::auth);
  EXPECT_EQ(failure_for(403), ProviderFailure::auth);
  EXPECT_EQ(failure_for(429), ProviderFailure::rate_limited);
  EXPECT_EQ(failure_for(503), ProviderFailure::transport);
  EXPECT_EQ(failure_for(400), ProviderFailure::bad_request);
  server.stop();
  t.join();
}

TEST(HttpProvider, EnvironmentConfiguration) {
  ::setenv("AIPAT_PROVIDER_MY_LLM_KEY", "k1", 1);
  ::setenv("AIPAT_PROVIDER_MY_LLM_URL", "http://example.invalid:9", 1);
  const auto cfg = http_config_from_env("my-llm", WireProtocol::openai_chat);
  EXPECT_EQ(cfg.api_key, "k1");
  EXPECT_EQ(cfg.base_url, "http://example.invalid:9");
  ::unsetenv("AIPAT_PROVIDER_MY_LLM_URL");
  EXPECT_EQ(http_config_from_env("my-llm", WireProtocol::gemini_generate).base_url,
            "https://generativelanguage.googleapis.com");
}
