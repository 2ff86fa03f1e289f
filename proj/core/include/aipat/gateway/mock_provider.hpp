#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "aipat/gateway/provider.hpp"

namespace aipat::gateway {

/// One scripted reply: either text or a simulated failure.
struct MockOutcome {
  enum class Kind { text, timeout, rate_limited, transport, auth };
  Kind kind = Kind::text;
  std::string text;

  static MockOutcome reply(std::string t) { return {Kind::text, std::move(t)}; }
  static MockOutcome timeout() { return {Kind::timeout, {}}; }
  static MockOutcome rate_limited() { return {Kind::rate_limited, {}}; }
  static MockOutcome transport() { return {Kind::transport, {}}; }
  static MockOutcome auth() { return {Kind::auth, {}}; }
};

/// Deterministic offline provider.
///
/// Lookup order per request: outcomes scripted for the request digest, then
/// predicate scripts in registration order, then the fallback responder.
/// A script's outcomes are consumed in order and the last one repeats.
class MockProvider final : public Provider {
 public:
  using Responder = std::function<std::string(const ChatRequest&)>;
  using Predicate = std::function<bool(const ChatRequest&)>;

  explicit MockProvider(std::string id = "mock");

  /// Loads `<digest>.txt` (raw reply) and `<digest>.json`
  /// ({"outcomes": [{"text": ...} | {"error": "timeout"|...}]}) files.
  static std::shared_ptr<MockProvider> from_fixture_dir(const std::filesystem::path& dir, std::string id = "mock");

  void script(const std::string& digest, std::vector<MockOutcome> outcomes);
  void script_when(Predicate predicate, std::vector<MockOutcome> outcomes);
  void set_fallback(Responder responder);

  std::string id() const override { return id_; }
  std::string send(const ChatRequest& request) override;

  int call_count() const;
  std::vector<ChatRequest> history() const;

 private:
  struct Script {
    std::vector<MockOutcome> outcomes;
    std::size_t cursor = 0;
    const MockOutcome& next();
  };
  struct PredicateScript {
    Predicate predicate;
    Script script;
  };

  std::string id_;
  mutable std::mutex mu_;
  std::map<std::string, Script> by_digest_;
  std::vector<PredicateScript> by_predicate_;
  Responder fallback_;
  std::vector<ChatRequest> history_;
};

/// Built-in responder that answers the system's own prompt formats:
/// grading prompts get a schema-valid evaluation whose tiers are derived
/// from the request digest, verification prompts compare the supplied
/// handwriting reading with the typed text, and appeal reviews uphold.
std::string default_mock_response(const ChatRequest& request);

}  // namespace aipat::gateway
