#include "aipat/time.hpp"

#include <cstdio>
#include <ctime>
#include <thread>

namespace aipat {

std::string format_timestamp(Timestamp t) {
  using namespace std::chrono;
  const auto secs = floor<seconds>(t);
  const auto ms = (t - secs).count();
  const std::time_t tt = system_clock::to_time_t(secs);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", tm.tm_year + 1900, tm.tm_mon + 1,
                tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec, static_cast<int>(ms));
  return buf;
}

std::optional<Timestamp> parse_timestamp(std::string_view text) {
  int y, mo, d, h, mi, s, ms = 0;
  const std::string str(text);
  int consumed = 0;
  if (std::sscanf(str.c_str(), "%4d-%2d-%2dT%2d:%2d:%2d%n", &y, &mo, &d, &h, &mi, &s, &consumed) != 6) {
    return std::nullopt;
  }
  std::string_view rest = text.substr(static_cast<std::size_t>(consumed));
  if (!rest.empty() && rest[0] == '.') {
    int n = 0;
    if (std::sscanf(str.c_str() + consumed, ".%3d%n", &ms, &n) != 1) return std::nullopt;
    rest = rest.substr(static_cast<std::size_t>(n));
  }
  if (rest != "Z") return std::nullopt;
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 60) return std::nullopt;
  return time_point_cast<milliseconds>(sys_days{ymd} + hours{h} + minutes{mi} + seconds{s} + milliseconds{ms});
}

Timestamp SystemClock::now() const {
  return std::chrono::time_point_cast<std::chrono::milliseconds>(std::chrono::system_clock::now());
}

void SystemClock::sleep_for(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

Timestamp ManualClock::now() const {
  std::lock_guard lock(mu_);
  return now_;
}

void ManualClock::sleep_for(std::chrono::milliseconds d) {
  std::lock_guard lock(mu_);
  now_ += d;
}

SystemClock& system_clock() {
  static SystemClock clock;
  return clock;
}

}  // namespace aipat
