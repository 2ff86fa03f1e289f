#pragma once

#include <chrono>
#include <filesystem>
#include <string>
#include <vector>

#include "aipat/appeals.hpp"
#include "aipat/gateway/provider.hpp"
#include "aipat/grading.hpp"
#include "aipat/json_io.hpp"
#include "aipat/secure_dist.hpp"
#include "aipat/verifier.hpp"

namespace aipat::service {

struct ProviderSpec {
  std::string id;
  std::string kind = "mock";  // mock | openai_chat | gemini_generate
  std::filesystem::path fixture_dir;  // mock only; empty = built-in responder
  gateway::ProviderPolicy policy;
  std::chrono::seconds timeout{60};
};

/// Everything the CLI and the service share. Loaded from a JSON file whose
/// relative paths resolve against the file's directory.
struct Config {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path data_dir = "aipat-data";
  std::filesystem::path token_file;
  std::filesystem::path distribution_dir;  // empty = <data_dir>/dist
  std::vector<ProviderSpec> providers;      // a "mock" provider is always present

  std::string verifier_provider = "mock";
  verifier::VerifierConfig verifier;
  verifier::IntegrityPolicy integrity;

  std::string reviewer_provider = "mock";
  appeals::ReviewerConfig reviewer;
  appeals::AppealPolicy appeal;

  grading::GradingConfig grading;
  dist::PasswordPolicy password;

  /// ErrorKind::validation / range on the first bad setting.
  void validate() const;
  std::filesystem::path dist_dir() const;
  const ProviderSpec* provider(const std::string& id) const;
};

Config default_config();
/// Unknown keys are structural errors so typos do not silently fall back to
/// defaults.
Config config_from_json(const Json& j, const std::filesystem::path& base_dir = ".");
Config load_config(const std::filesystem::path& path);

/// Mock providers answer through default_mock_response unless a fixture
/// directory is set; HTTP providers read AIPAT_PROVIDER_<NAME>_KEY/_URL.
gateway::ProviderRegistry build_registry(const Config& config, Clock& clock);

}  // namespace aipat::service
