#pragma once

#include <chrono>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "aipat/decimal.hpp"

namespace aipat::gateway {

/// Binary input for multimodal providers (scanned handwriting).
struct Attachment {
  std::string media_type;  // "image/png", "image/jpeg", ...
  std::vector<std::uint8_t> bytes;

  friend bool operator==(const Attachment&, const Attachment&) = default;
};

struct ChatRequest {
  std::string system_message;
  std::string user_message;
  std::string model;
  Decimal temperature;
  int max_attempts = 3;
  std::vector<Attachment> attachments;
  // Opaque provider parameters (top_p, seed, ...) forwarded verbatim.
  std::map<std::string, std::string> passthrough;

  /// SHA-256 over every field; equal requests have equal digests.
  std::string digest() const;

  /// Throws ErrorKind::validation for empty messages, negative temperature
  /// or max_attempts < 1.
  void validate() const;
};

struct ChatResponse {
  std::string raw_text;
  std::chrono::milliseconds provider_latency{0};
  int attempt_count = 1;
  std::string request_digest;
};

enum class ProviderFailure { auth, rate_limited, timeout, transport, bad_request };

/// Thrown by a single provider attempt.
class ProviderError : public std::runtime_error {
 public:
  ProviderError(ProviderFailure failure, const std::string& message)
      : std::runtime_error(message), failure_(failure) {}

  ProviderFailure failure() const noexcept { return failure_; }
  bool retryable() const noexcept {
    return failure_ == ProviderFailure::rate_limited || failure_ == ProviderFailure::timeout ||
           failure_ == ProviderFailure::transport;
  }

 private:
  ProviderFailure failure_;
};

}  // namespace aipat::gateway
