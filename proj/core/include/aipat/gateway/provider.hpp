#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>

#include "aipat/gateway/chat.hpp"
#include "aipat/time.hpp"

namespace aipat::gateway {

/// One wire-level attempt against a chat-completion backend.
/// Implementations throw ProviderError on failure and must be thread-safe.
class Provider {
 public:
  virtual ~Provider() = default;
  virtual std::string id() const = 0;
  virtual std::string send(const ChatRequest& request) = 0;
};

struct ProviderPolicy {
  int requests_per_minute = 60;
  int parallelism = 4;
  std::chrono::milliseconds initial_backoff{500};
  double backoff_factor = 2.0;
  std::chrono::milliseconds max_backoff{30'000};
};

/// Admits at most `limit` acquisitions in any 60 s window (sliding log).
class RateLimiter {
 public:
  RateLimiter(int requests_per_minute, Clock& clock);

  /// Blocks (via the clock) until a slot is free, then records the request.
  void acquire();

 private:
  int limit_;
  Clock& clock_;
  std::mutex mu_;
  std::deque<Timestamp> recent_;
};

/// Counting gate bounding concurrent in-flight calls.
class ConcurrencyGate {
 public:
  explicit ConcurrencyGate(int slots) : free_(slots) {}
  void enter();
  void leave();

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int free_;
};

/// A configured provider: retry with exponential backoff, rate limiting and
/// a parallelism bound around the raw Provider. Shareable across threads.
class ProviderHandle {
 public:
  ProviderHandle(std::shared_ptr<Provider> provider, ProviderPolicy policy, Clock& clock);

  const std::string& id() const { return id_; }
  const ProviderPolicy& policy() const { return policy_; }
  Provider& provider() { return *provider_; }

  /// Returns the first successful attempt. Auth and bad-request failures
  /// throw immediately (ErrorKind::provider_auth / validation); retryable
  /// failures back off and retry until request.max_attempts, then throw
  /// ErrorKind::retries_exhausted.
  ChatResponse complete(const ChatRequest& request);

 private:
  std::shared_ptr<Provider> provider_;
  std::string id_;
  ProviderPolicy policy_;
  Clock& clock_;
  RateLimiter limiter_;
  ConcurrencyGate gate_;
};

inline ChatResponse complete(const ChatRequest& request, ProviderHandle& provider) {
  return provider.complete(request);
}

/// Named provider handles.
class ProviderRegistry {
 public:
  void add(std::shared_ptr<ProviderHandle> handle);
  ProviderHandle& get(const std::string& id) const;  // ErrorKind::not_found
  bool contains(const std::string& id) const;
  std::vector<std::string> ids() const;

 private:
  std::map<std::string, std::shared_ptr<ProviderHandle>> handles_;
};

}  // namespace aipat::gateway
