#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "aipat/decimal.hpp"

using aipat::Decimal;

TEST(Decimal, ParsesPlainAndFractionalForms) {
  EXPECT_EQ(Decimal::parse("12")->hundredths(), 1200);
  EXPECT_EQ(Decimal::parse("-3.5")->hundredths(), -350);
  EXPECT_EQ(Decimal::parse("0.25")->hundredths(), 25);
  EXPECT_EQ(Decimal::parse("+1.05")->hundredths(), 105);
  EXPECT_EQ(Decimal::parse(".5")->hundredths(), 50);
  EXPECT_EQ(Decimal::parse("1.500")->hundredths(), 150);
}

TEST(Decimal, RejectsMalformedText) {
  for (const char* bad : {"", "-", "1.", "1.234", "1e3", "abc", "1,5", " 1", "1 ", "0x10", "--1"}) {
    EXPECT_FALSE(Decimal::parse(bad).has_value()) << bad;
  }
}

TEST(Decimal, RendersShortestExactForm) {
  EXPECT_EQ(Decimal(3).to_string(), "3");
  EXPECT_EQ(Decimal::from_hundredths(150).to_string(), "1.5");
  EXPECT_EQ(Decimal::from_hundredths(625).to_string(), "6.25");
  EXPECT_EQ(Decimal::from_hundredths(-50).to_string(), "-0.5");
  EXPECT_EQ(Decimal::from_hundredths(-5).to_string(), "-0.05");
  EXPECT_EQ(Decimal().to_string(), "0");
}

TEST(Decimal, FromDoubleAcceptsOnlyHundredths) {
  EXPECT_EQ(Decimal::from_double(0.1 + 0.2)->hundredths(), 30);
  EXPECT_EQ(Decimal::from_double(-2.75)->hundredths(), -275);
  EXPECT_FALSE(Decimal::from_double(0.125).has_value());
  EXPECT_FALSE(Decimal::from_double(std::nan("")).has_value());
}

TEST(Decimal, ArithmeticIsExact) {
  Decimal sum;
  for (int i = 0; i < 10; ++i) sum += *Decimal::parse("0.1");
  EXPECT_EQ(sum, Decimal(1));
  EXPECT_LT(Decimal(1), *Decimal::parse("1.01"));
  EXPECT_EQ(Decimal(2) - *Decimal::parse("0.5"), *Decimal::parse("1.5"));
}

TEST(Decimal, TextRoundTripProperty) {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<std::int64_t> dist(-10'000'000, 10'000'000);
  for (int i = 0; i < 5000; ++i) {
    const auto d = Decimal::from_hundredths(dist(rng));
    const auto back = Decimal::parse(d.to_string());
    ASSERT_TRUE(back.has_value()) << d.to_string();
    EXPECT_EQ(*back, d);
  }
}
