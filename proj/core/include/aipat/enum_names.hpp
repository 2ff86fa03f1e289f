#pragma once

#include <optional>
#include <string_view>
#include <utility>

namespace aipat {

// Specialize with `static constexpr std::array<std::pair<E, std::string_view>, N> kValues`.
template <typename E>
struct EnumNames;

template <typename E>
constexpr std::string_view enum_name(E value) {
  for (const auto& [e, name] : EnumNames<E>::kValues) {
    if (e == value) return name;
  }
  return "?";
}

template <typename E>
constexpr std::optional<E> enum_from(std::string_view name) {
  for (const auto& [e, n] : EnumNames<E>::kValues) {
    if (n == name) return e;
  }
  return std::nullopt;
}

}  // namespace aipat

#define AIPAT_ENUM_NAMES(E, ...)                                              \
  template <>                                                                 \
  struct aipat::EnumNames<E> {                                                \
    static constexpr std::pair<E, std::string_view> kValues[] = {__VA_ARGS__}; \
  }
