#include "aipat/gateway/provider.hpp"

#include <algorithm>
#include <cmath>

#include "aipat/error.hpp"

namespace aipat::gateway {

namespace {
constexpr std::chrono::milliseconds kWindow{60'000};
}

RateLimiter::RateLimiter(int requests_per_minute, Clock& clock) : limit_(requests_per_minute), clock_(clock) {
  if (limit_ < 1) fail(ErrorKind::validation, "requests_per_minute must be >= 1");
}

void RateLimiter::acquire() {
  std::unique_lock lock(mu_);
  for (;;) {
    const Timestamp now = clock_.now();
    // A request at time t occupies the window (t - 60 s, t]; it frees its
    // slot once now >= t + 60 s.
    while (!recent_.empty() && recent_.front() + kWindow <= now) recent_.pop_front();
    if (static_cast<int>(recent_.size()) < limit_) {
      recent_.push_back(now);
      return;
    }
    const auto wait = recent_.front() + kWindow - now;
    lock.unlock();
    clock_.sleep_for(wait);
    lock.lock();
  }
}

void ConcurrencyGate::enter() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [this] { return free_ > 0; });
  --free_;
}

void ConcurrencyGate::leave() {
  {
    std::lock_guard lock(mu_);
    ++free_;
  }
  cv_.notify_one();
}

ProviderHandle::ProviderHandle(std::shared_ptr<Provider> provider, ProviderPolicy policy, Clock& clock)
    : provider_(std::move(provider)),
      id_(provider_->id()),
      policy_(policy),
      clock_(clock),
      limiter_(policy.requests_per_minute, clock),
      gate_(std::max(1, policy.parallelism)) {}

ChatResponse ProviderHandle::complete(const ChatRequest& request) {
  request.validate();
  struct GateGuard {
    ConcurrencyGate& g;
    explicit GateGuard(ConcurrencyGate& gate) : g(gate) { g.enter(); }
    ~GateGuard() { g.leave(); }
  } guard(gate_);

  const std::string digest = request.digest();
  auto backoff = policy_.initial_backoff;
  std::string last_error;
  for (int attempt = 1; attempt <= request.max_attempts; ++attempt) {
    limiter_.acquire();
    const Timestamp started = clock_.now();
    try {
      std::string text = provider_->send(request);
      return ChatResponse{std::move(text), clock_.now() - started, attempt, digest};
    } catch (const ProviderError& e) {
      if (e.failure() == ProviderFailure::auth) {
        fail(ErrorKind::provider_auth, "provider '" + id_ + "' rejected credentials: " + e.what());
      }
      if (!e.retryable()) fail(ErrorKind::validation, "provider '" + id_ + "' rejected request: " + e.what());
      last_error = e.what();
    }
    if (attempt < request.max_attempts) {
      clock_.sleep_for(backoff);
      const auto next = std::chrono::milliseconds(
          static_cast<std::int64_t>(std::llround(static_cast<double>(backoff.count()) * policy_.backoff_factor)));
      backoff = std::min(next, policy_.max_backoff);
    }
  }
  fail(ErrorKind::retries_exhausted, "provider '" + id_ + "' failed after " + std::to_string(request.max_attempts) +
                                         " attempts: " + last_error);
}

void ProviderRegistry::add(std::shared_ptr<ProviderHandle> handle) {
  const std::string id = handle->id();
  handles_[id] = std::move(handle);
}

ProviderHandle& ProviderRegistry::get(const std::string& id) const {
  auto it = handles_.find(id);
  if (it == handles_.end()) fail(ErrorKind::not_found, "no provider named '" + id + "'");
  return *it->second;
}

bool ProviderRegistry::contains(const std::string& id) const { return handles_.count(id) != 0; }

std::vector<std::string> ProviderRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& [id, h] : handles_) out.push_back(id);
  return out;
}

}  // namespace aipat::gateway
