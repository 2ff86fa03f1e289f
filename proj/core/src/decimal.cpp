#include "aipat/decimal.hpp"

#include <cmath>
#include <limits>

namespace aipat {

std::optional<Decimal> Decimal::parse(std::string_view text) {
  if (text.empty()) return std::nullopt;
  bool negative = false;
  std::size_t i = 0;
  if (text[0] == '-' || text[0] == '+') {
    negative = text[0] == '-';
    ++i;
  }
  std::int64_t whole = 0;
  std::size_t digits = 0;
  for (; i < text.size() && text[i] >= '0' && text[i] <= '9'; ++i, ++digits) {
    if (whole > std::numeric_limits<std::int64_t>::max() / 1000) return std::nullopt;
    whole = whole * 10 + (text[i] - '0');
  }
  std::int64_t frac = 0;
  std::size_t frac_digits = 0;
  if (i < text.size() && text[i] == '.') {
    ++i;
    for (; i < text.size() && text[i] >= '0' && text[i] <= '9'; ++i, ++frac_digits) {
      if (frac_digits >= 2) {
        // Trailing zeros past the second digit are harmless ("1.500").
        if (text[i] != '0') return std::nullopt;
        continue;
      }
      frac = frac * 10 + (text[i] - '0');
    }
    if (frac_digits == 0) return std::nullopt;
  }
  if (i != text.size() || (digits == 0 && frac_digits == 0)) return std::nullopt;
  if (frac_digits == 1) frac *= 10;
  const std::int64_t h = whole * kScale + frac;
  return from_hundredths(negative ? -h : h);
}

std::optional<Decimal> Decimal::from_double(double value) {
  if (!std::isfinite(value) || std::fabs(value) > 1e15) return std::nullopt;
  const double scaled = value * kScale;
  const double rounded = std::round(scaled);
  if (std::fabs(scaled - rounded) > 1e-6) return std::nullopt;
  return from_hundredths(static_cast<std::int64_t>(rounded));
}

std::string Decimal::to_string() const {
  const bool negative = hundredths_ < 0;
  const std::uint64_t mag =
      negative ? static_cast<std::uint64_t>(-(hundredths_ + 1)) + 1 : static_cast<std::uint64_t>(hundredths_);
  std::string out = negative ? "-" : "";
  out += std::to_string(mag / kScale);
  const auto frac = mag % kScale;
  if (frac != 0) {
    out += '.';
    out += static_cast<char>('0' + frac / 10);
    if (frac % 10 != 0) out += static_cast<char>('0' + frac % 10);
  }
  return out;
}

}  // namespace aipat
