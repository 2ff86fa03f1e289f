#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace aipat {

// Error categories shared by every module. The REST layer maps each kind to
// exactly one HTTP status, so new kinds need a mapping in service/api.cpp.
enum class ErrorKind {
  structural,     // malformed input shape (missing keys, length mismatch)
  range,          // numeric value outside its domain
  validation,     // domain rule violated
  not_found,
  conflict,       // uniqueness or duplicate-open rules
  state,          // operation invalid for the record's current state
  authorization,  // authenticated but not allowed
  authentication, // missing/invalid credentials
  integrity,      // referential integrity broken
  undefined,      // statistic undefined for the input (constant vector)
  io,
  provider_auth,      // provider rejected credentials; never retried
  retries_exhausted,  // provider kept failing with retryable errors
  unavailable,        // result could not be produced; routed to manual review
};

std::string_view to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace aipat
