#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>

#include "aipat/gateway/provider.hpp"

namespace aipat::gateway {

enum class WireProtocol { openai_chat, gemini_generate };

struct HttpProviderConfig {
  std::string id;
  WireProtocol protocol = WireProtocol::openai_chat;
  std::string base_url;  // scheme://host[:port][/prefix]
  std::string api_key;
  std::chrono::seconds timeout{60};
};

/// Reads AIPAT_PROVIDER_<NAME>_KEY and AIPAT_PROVIDER_<NAME>_URL, where NAME
/// is the upper-cased provider id with non-alphanumerics mapped to '_'.
/// Falls back to the protocol's public endpoint when the URL is unset.
HttpProviderConfig http_config_from_env(const std::string& id, WireProtocol protocol);

/// OpenAI-style POST {base}/v1/chat/completions, or Gemini-style
/// POST {base}/v1beta/models/{model}:generateContent. Status 401/403 map to
/// auth, 429 to rate_limited, 5xx and socket errors to transport, client
/// timeouts to timeout, other 4xx to bad_request.
std::shared_ptr<Provider> make_http_provider(HttpProviderConfig config);

/// Request body each adapter sends; exposed for adapter tests.
std::string build_request_body(WireProtocol protocol, const ChatRequest& request);
/// Extracts the reply text; throws ProviderError(bad_request) on an
/// unexpected response shape.
std::string extract_reply_text(WireProtocol protocol, const std::string& response_body);

}  // namespace aipat::gateway
