#include "aipat/service/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "aipat/error.hpp"
#include "aipat/gateway/http_providers.hpp"
#include "aipat/gateway/mock_provider.hpp"

namespace aipat::service {

namespace {

void only_keys(const Json& j, const std::string& where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) fail(ErrorKind::structural, where + " must be an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (auto a : allowed) known = known || a == key;
    if (!known) fail(ErrorKind::structural, "unknown config key '" + where + "." + key + "'");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path = p;
  return path.is_relative() ? base / path : path;
}

template <typename T>
T get(const Json& j, const char* key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::structural, std::string("config key '") + key + "' has the wrong type");
  }
}

Decimal get_decimal(const Json& j, const char* key, Decimal fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<Decimal>();
}

template <typename E>
E get_enum(const Json& j, const char* key, E fallback) {
  if (!j.contains(key)) return fallback;
  const auto name = get<std::string>(j, key, "");
  auto e = enum_from<E>(name);
  if (!e) fail(ErrorKind::structural, std::string("config key '") + key + "' has unknown value '" + name + "'");
  return *e;
}

ProviderSpec provider_from_json(const Json& j, const std::filesystem::path& base) {
  only_keys(j, "providers[]",
            {"id", "kind", "fixture_dir", "requests_per_minute", "parallelism", "initial_backoff_ms",
             "backoff_factor", "max_backoff_ms", "timeout_s"});
  ProviderSpec p;
  p.id = get<std::string>(j, "id", "");
  p.kind = get<std::string>(j, "kind", "mock");
  if (j.contains("fixture_dir")) p.fixture_dir = resolve(base, get<std::string>(j, "fixture_dir", ""));
  if (p.kind == "mock") p.policy.requests_per_minute = 60'000;
  p.policy.requests_per_minute = get<int>(j, "requests_per_minute", p.policy.requests_per_minute);
  p.policy.parallelism = get<int>(j, "parallelism", p.policy.parallelism);
  p.policy.initial_backoff = std::chrono::milliseconds(get<int>(j, "initial_backoff_ms", 500));
  p.policy.backoff_factor = get<double>(j, "backoff_factor", 2.0);
  p.policy.max_backoff = std::chrono::milliseconds(get<int>(j, "max_backoff_ms", 30'000));
  p.timeout = std::chrono::seconds(get<int>(j, "timeout_s", 60));
  return p;
}

ProviderSpec builtin_mock() {
  ProviderSpec p;
  p.id = "mock";
  p.policy.requests_per_minute = 60'000;
  p.policy.parallelism = 8;
  p.policy.initial_backoff = std::chrono::milliseconds(0);
  return p;
}

}  // namespace

void Config::validate() const {
  if (port < 0 || port > 65535) fail(ErrorKind::range, "port must be in [0, 65535]");
  if (data_dir.empty()) fail(ErrorKind::validation, "data_dir is required");
  std::set<std::string> ids;
  for (const auto& p : providers) {
    if (p.id.empty()) fail(ErrorKind::validation, "provider id is required");
    if (!ids.insert(p.id).second) fail(ErrorKind::validation, "duplicate provider '" + p.id + "'");
    if (p.kind != "mock" && p.kind != "openai_chat" && p.kind != "gemini_generate") {
      fail(ErrorKind::validation, "provider '" + p.id + "' has unknown kind '" + p.kind + "'");
    }
    if (p.policy.requests_per_minute < 1 || p.policy.parallelism < 1) {
      fail(ErrorKind::range, "provider '" + p.id + "' needs requests_per_minute and parallelism >= 1");
    }
    if (p.policy.backoff_factor < 1.0) fail(ErrorKind::range, "provider '" + p.id + "' backoff_factor must be >= 1");
  }
  if (!ids.count(verifier_provider)) fail(ErrorKind::validation, "verifier provider '" + verifier_provider + "' is not configured");
  if (!ids.count(reviewer_provider)) fail(ErrorKind::validation, "reviewer provider '" + reviewer_provider + "' is not configured");
  integrity.validate();
  password.validate();
  if (grading.parallelism < 1) fail(ErrorKind::range, "grading.parallelism must be >= 1");
  if (grading.parse_reasks < 0 || verifier.parse_reasks < 0 || appeal.parse_reasks < 0) {
    fail(ErrorKind::range, "parse_reasks must be >= 0");
  }
  if (appeal.max_appeals_per_evaluation < 1) fail(ErrorKind::range, "max_appeals_per_evaluation must be >= 1");
  if (appeal.window.count() < 0) fail(ErrorKind::range, "appeal window must not be negative");
}

std::filesystem::path Config::dist_dir() const { return distribution_dir.empty() ? data_dir / "dist" : distribution_dir; }

const ProviderSpec* Config::provider(const std::string& id) const {
  for (const auto& p : providers) {
    if (p.id == id) return &p;
  }
  return nullptr;
}

Config default_config() {
  Config c;
  c.providers.push_back(builtin_mock());
  c.verifier.blob_dir = c.data_dir / "blobs";
  return c;
}

Config config_from_json(const Json& j, const std::filesystem::path& base) {
  only_keys(j, "config",
            {"host", "port", "data_dir", "token_file", "distribution_dir", "providers", "verifier", "reviewer",
             "integrity_policy", "appeal_policy", "grading", "password_policy"});
  Config c;
  c.host = get<std::string>(j, "host", c.host);
  c.port = get<int>(j, "port", c.port);
  if (j.contains("data_dir")) c.data_dir = resolve(base, get<std::string>(j, "data_dir", ""));
  if (j.contains("token_file")) c.token_file = resolve(base, get<std::string>(j, "token_file", ""));
  if (j.contains("distribution_dir")) c.distribution_dir = resolve(base, get<std::string>(j, "distribution_dir", ""));

  if (j.contains("providers")) {
    if (!j["providers"].is_array()) fail(ErrorKind::structural, "providers must be an array");
    for (const auto& p : j["providers"]) c.providers.push_back(provider_from_json(p, base));
  }
  if (c.provider("mock") == nullptr) c.providers.push_back(builtin_mock());

  if (j.contains("verifier")) {
    const auto& v = j["verifier"];
    only_keys(v, "verifier", {"provider", "model", "temperature", "parse_reasks"});
    c.verifier_provider = get<std::string>(v, "provider", c.verifier_provider);
    c.verifier.model = get<std::string>(v, "model", c.verifier.model);
    c.verifier.temperature = get_decimal(v, "temperature", c.verifier.temperature);
    c.verifier.parse_reasks = get<int>(v, "parse_reasks", c.verifier.parse_reasks);
  }
  c.verifier.blob_dir = c.data_dir / "blobs";

  if (j.contains("integrity_policy")) {
    const auto& v = j["integrity_policy"];
    only_keys(v, "integrity_policy", {"cosmetic_action", "semantic_action", "penalty_fraction"});
    c.integrity.cosmetic_action = get_enum(v, "cosmetic_action", c.integrity.cosmetic_action);
    c.integrity.semantic_action = get_enum(v, "semantic_action", c.integrity.semantic_action);
    c.integrity.penalty_fraction = get_decimal(v, "penalty_fraction", c.integrity.penalty_fraction);
  }
  if (j.contains("reviewer")) {
    const auto& v = j["reviewer"];
    only_keys(v, "reviewer", {"provider", "label", "temperature"});
    c.reviewer_provider = get<std::string>(v, "provider", c.reviewer_provider);
    c.reviewer.label = get<std::string>(v, "label", c.reviewer.label);
    c.reviewer.temperature = get_decimal(v, "temperature", c.reviewer.temperature);
  }
  if (j.contains("appeal_policy")) {
    const auto& v = j["appeal_policy"];
    only_keys(v, "appeal_policy", {"window_days", "max_appeals_per_evaluation", "parse_reasks"});
    c.appeal.window = std::chrono::hours(24 * get<int>(v, "window_days", 14));
    c.appeal.max_appeals_per_evaluation = get<int>(v, "max_appeals_per_evaluation", c.appeal.max_appeals_per_evaluation);
    c.appeal.parse_reasks = get<int>(v, "parse_reasks", c.appeal.parse_reasks);
  }
  if (j.contains("grading")) {
    const auto& v = j["grading"];
    only_keys(v, "grading", {"parallelism", "auto_zero_blank", "parse_reasks", "feedback_instructions", "system_message"});
    c.grading.parallelism = get<int>(v, "parallelism", c.grading.parallelism);
    c.grading.auto_zero_blank = get<bool>(v, "auto_zero_blank", c.grading.auto_zero_blank);
    c.grading.parse_reasks = get<int>(v, "parse_reasks", c.grading.parse_reasks);
    c.grading.feedback_instructions = get<std::string>(v, "feedback_instructions", c.grading.feedback_instructions);
    c.grading.system_message = get<std::string>(v, "system_message", c.grading.system_message);
  }
  if (j.contains("password_policy")) {
    const auto& v = j["password_policy"];
    only_keys(v, "password_policy", {"length", "charset"});
    c.password.length = get<int>(v, "length", c.password.length);
    c.password.charset = get<std::string>(v, "charset", c.password.charset);
  }
  c.validate();
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  Json j = Json::parse(buf.str(), nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::structural, "config " + path.string() + " is not valid JSON");
  return config_from_json(j, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

gateway::ProviderRegistry build_registry(const Config& config, Clock& clock) {
  gateway::ProviderRegistry registry;
  for (const auto& spec : config.providers) {
    std::shared_ptr<gateway::Provider> provider;
    if (spec.kind == "mock") {
      provider = spec.fixture_dir.empty() ? std::make_shared<gateway::MockProvider>(spec.id)
                                          : gateway::MockProvider::from_fixture_dir(spec.fixture_dir, spec.id);
    } else {
      const auto protocol =
          spec.kind == "openai_chat" ? gateway::WireProtocol::openai_chat : gateway::WireProtocol::gemini_generate;
      auto http = gateway::http_config_from_env(spec.id, protocol);
      http.timeout = spec.timeout;
      provider = gateway::make_http_provider(std::move(http));
    }
    registry.add(std::make_shared<gateway::ProviderHandle>(provider, spec.policy, clock));
  }
  return registry;
}

}  // namespace aipat::service
