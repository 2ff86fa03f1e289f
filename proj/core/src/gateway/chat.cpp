#include "aipat/gateway/chat.hpp"

#include "aipat/digest.hpp"
#include "aipat/error.hpp"

namespace aipat::gateway {

std::string ChatRequest::digest() const {
  FieldHasher h;
  h.add(system_message).add(user_message).add(model).add(temperature.to_string()).add(std::to_string(max_attempts));
  h.add(std::to_string(attachments.size()));
  for (const auto& a : attachments) h.add(a.media_type).add(sha256_hex(std::span<const std::uint8_t>(a.bytes)));
  h.add(std::to_string(passthrough.size()));
  for (const auto& [k, v] : passthrough) h.add(k).add(v);
  return h.hex();
}

void ChatRequest::validate() const {
  if (system_message.empty()) fail(ErrorKind::validation, "chat request has an empty system message");
  if (user_message.empty()) fail(ErrorKind::validation, "chat request has an empty user message");
  if (temperature < kZero) fail(ErrorKind::validation, "temperature must be >= 0");
  if (max_attempts < 1) fail(ErrorKind::validation, "max_attempts must be >= 1");
}

}  // namespace aipat::gateway
