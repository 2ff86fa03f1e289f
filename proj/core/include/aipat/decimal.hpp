#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace aipat {

/// Exact fixed-point number with two fractional digits.
///
/// Grades, penalties and temperatures are stored as integer hundredths so that
/// sums and CSV round-trips never pick up binary floating-point noise.
class Decimal {
 public:
  static constexpr std::int64_t kScale = 100;

  constexpr Decimal() = default;
  constexpr explicit Decimal(int whole) : hundredths_(std::int64_t{whole} * kScale) {}

  static constexpr Decimal from_hundredths(std::int64_t h) {
    Decimal d;
    d.hundredths_ = h;
    return d;
  }

  /// Parses "12", "-3.5", "0.25". More than two fractional digits, exponents
  /// or stray characters yield nullopt.
  static std::optional<Decimal> parse(std::string_view text);

  /// Accepts a double only if it lies within 1e-6 of a hundredth.
  static std::optional<Decimal> from_double(double value);

  constexpr std::int64_t hundredths() const { return hundredths_; }
  double to_double() const { return static_cast<double>(hundredths_) / kScale; }

  /// Shortest exact rendering: "3", "1.5", "6.25", "-0.5".
  std::string to_string() const;

  constexpr Decimal operator-() const { return from_hundredths(-hundredths_); }
  constexpr Decimal& operator+=(Decimal o) {
    hundredths_ += o.hundredths_;
    return *this;
  }
  constexpr Decimal& operator-=(Decimal o) {
    hundredths_ -= o.hundredths_;
    return *this;
  }
  friend constexpr Decimal operator+(Decimal a, Decimal b) { return a += b; }
  friend constexpr Decimal operator-(Decimal a, Decimal b) { return a -= b; }
  friend constexpr Decimal operator*(Decimal a, std::int64_t k) {
    return from_hundredths(a.hundredths_ * k);
  }

  friend constexpr auto operator<=>(Decimal, Decimal) = default;

 private:
  std::int64_t hundredths_ = 0;
};

inline constexpr Decimal kZero{};

}  // namespace aipat
