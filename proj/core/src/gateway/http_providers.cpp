#include "aipat/gateway/http_providers.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <cctype>
#include <cstdlib>

#include "aipat/digest.hpp"
#include "aipat/error.hpp"

namespace aipat::gateway {

namespace {

using Json = nlohmann::json;

std::string env_name(const std::string& id, const char* suffix) {
  std::string name = "AIPAT_PROVIDER_";
  for (char c : id) name += std::isalnum(static_cast<unsigned char>(c)) ? static_cast<char>(std::toupper(c)) : '_';
  return name + "_" + suffix;
}

Json passthrough_value(const std::string& raw) {
  Json v = Json::parse(raw, nullptr, false);
  return v.is_discarded() ? Json(raw) : v;
}

std::string data_url(const Attachment& a) {
  return "data:" + a.media_type + ";base64," + base64_encode(std::span<const std::uint8_t>(a.bytes));
}

struct SplitUrl {
  std::string scheme_host_port;
  std::string prefix;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) fail(ErrorKind::validation, "provider URL needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, ""};
  std::string prefix = url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, path_start), prefix};
}

class HttpProvider final : public Provider {
 public:
  explicit HttpProvider(HttpProviderConfig config) : config_(std::move(config)), url_(split_url(config_.base_url)) {}

  std::string id() const override { return config_.id; }

  std::string send(const ChatRequest& request) override {
    httplib::Client client(url_.scheme_host_port);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    client.set_write_timeout(config_.timeout);

    httplib::Headers headers;
    std::string path;
    if (config_.protocol == WireProtocol::openai_chat) {
      path = url_.prefix + "/v1/chat/completions";
      headers.emplace("Authorization", "Bearer " + config_.api_key);
    } else {
      path = url_.prefix + "/v1beta/models/" + request.model + ":generateContent";
      headers.emplace("x-goog-api-key", config_.api_key);
    }
    const std::string body = build_request_body(config_.protocol, request);
    auto result = client.Post(path, headers, body, "application/json");
    if (!result) {
      const auto err = result.error();
      const auto kind = (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
                            ? ProviderFailure::timeout
                            : ProviderFailure::transport;
      throw ProviderError(kind, "HTTP error: " + httplib::to_string(err));
    }
    const int status = result->status;
    if (status == 401 || status == 403) throw ProviderError(ProviderFailure::auth, "HTTP " + std::to_string(status));
    if (status == 429) throw ProviderError(ProviderFailure::rate_limited, "HTTP 429");
    if (status == 408) throw ProviderError(ProviderFailure::timeout, "HTTP 408");
    if (status >= 500) throw ProviderError(ProviderFailure::transport, "HTTP " + std::to_string(status));
    if (status < 200 || status >= 300) {
      throw ProviderError(ProviderFailure::bad_request, "HTTP " + std::to_string(status) + ": " + result->body);
    }
    return extract_reply_text(config_.protocol, result->body);
  }

 private:
  HttpProviderConfig config_;
  SplitUrl url_;
};

}  // namespace

HttpProviderConfig http_config_from_env(const std::string& id, WireProtocol protocol) {
  HttpProviderConfig cfg;
  cfg.id = id;
  cfg.protocol = protocol;
  const char* key = std::getenv(env_name(id, "KEY").c_str());
  const char* url = std::getenv(env_name(id, "URL").c_str());
  cfg.api_key = key != nullptr ? key : "";
  if (url != nullptr && *url != '\0') {
    cfg.base_url = url;
  } else {
    cfg.base_url = protocol == WireProtocol::openai_chat ? "https://api.openai.com"
                                                         : "https://generativelanguage.googleapis.com";
  }
  return cfg;
}

std::shared_ptr<Provider> make_http_provider(HttpProviderConfig config) {
  return std::make_shared<HttpProvider>(std::move(config));
}

std::string build_request_body(WireProtocol protocol, const ChatRequest& request) {
  const double temperature = request.temperature.to_double();
  if (protocol == WireProtocol::openai_chat) {
    Json user_content;
    if (request.attachments.empty()) {
      user_content = request.user_message;
    } else {
      user_content = Json::array({Json{{"type", "text"}, {"text", request.user_message}}});
      for (const auto& a : request.attachments) {
        user_content.push_back(Json{{"type", "image_url"}, {"image_url", Json{{"url", data_url(a)}}}});
      }
    }
    Json body{{"model", request.model},
              {"temperature", temperature},
              {"messages", Json::array({Json{{"role", "system"}, {"content", request.system_message}},
                                        Json{{"role", "user"}, {"content", user_content}}})}};
    for (const auto& [k, v] : request.passthrough) body[k] = passthrough_value(v);
    return body.dump(-1, ' ', false, Json::error_handler_t::replace);
  }
  Json parts = Json::array({Json{{"text", request.user_message}}});
  for (const auto& a : request.attachments) {
    parts.push_back(Json{{"inlineData", Json{{"mimeType", a.media_type},
                                             {"data", base64_encode(std::span<const std::uint8_t>(a.bytes))}}}});
  }
  Json generation{{"temperature", temperature}};
  for (const auto& [k, v] : request.passthrough) generation[k] = passthrough_value(v);
  Json body{{"systemInstruction", Json{{"parts", Json::array({Json{{"text", request.system_message}}})}}},
            {"contents", Json::array({Json{{"role", "user"}, {"parts", parts}}})},
            {"generationConfig", generation}};
  return body.dump(-1, ' ', false, Json::error_handler_t::replace);
}

std::string extract_reply_text(WireProtocol protocol, const std::string& response_body) {
  const Json doc = Json::parse(response_body, nullptr, false);
  try {
    if (!doc.is_discarded()) {
      if (protocol == WireProtocol::openai_chat) {
        return doc.at("choices").at(0).at("message").at("content").get<std::string>();
      }
      std::string text;
      for (const auto& part : doc.at("candidates").at(0).at("content").at("parts")) {
        text += part.at("text").get<std::string>();
      }
      return text;
    }
  } catch (const Json::exception&) {
  }
  throw ProviderError(ProviderFailure::bad_request, "unexpected provider response shape");
}

}  // namespace aipat::gateway
