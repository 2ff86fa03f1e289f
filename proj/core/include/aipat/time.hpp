#pragma once

#include <chrono>
#include <condition_variable>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

namespace aipat {

using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

/// "2024-11-05T09:30:00.000Z"
std::string format_timestamp(Timestamp t);
std::optional<Timestamp> parse_timestamp(std::string_view text);

/// Time source used by retry backoff, rate limiting and record timestamps.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual Timestamp now() const = 0;
  virtual void sleep_for(std::chrono::milliseconds d) = 0;
};

class SystemClock final : public Clock {
 public:
  Timestamp now() const override;
  void sleep_for(std::chrono::milliseconds d) override;
};

/// Virtual clock: sleeping advances time instantly. Thread-safe.
class ManualClock final : public Clock {
 public:
  explicit ManualClock(Timestamp start = Timestamp{std::chrono::milliseconds{1'700'000'000'000}})
      : now_(start) {}

  Timestamp now() const override;
  void sleep_for(std::chrono::milliseconds d) override;
  void advance(std::chrono::milliseconds d) { sleep_for(d); }

 private:
  mutable std::mutex mu_;
  Timestamp now_;
};

SystemClock& system_clock();

}  // namespace aipat
