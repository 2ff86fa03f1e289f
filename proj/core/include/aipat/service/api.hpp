#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "aipat/enum_names.hpp"
#include "aipat/error.hpp"
#include "aipat/gateway/provider.hpp"
#include "aipat/grading.hpp"
#include "aipat/service/config.hpp"
#include "aipat/store/record_store.hpp"

namespace aipat::service {

enum class Role { student, instructor, operator_ };

struct ApiToken {
  std::string token;
  Role role = Role::student;
  std::string subject;  // student id for students, user name otherwise
};

/// Static operator-provisioned tokens: a JSON array of
/// {"token": ..., "role": "student"|"instructor"|"operator", "subject": ...}.
class TokenStore {
 public:
  static TokenStore load(const std::filesystem::path& path);
  static TokenStore from_json(const Json& j);

  void add(ApiToken token);
  std::optional<ApiToken> find(std::string_view presented) const;
  std::size_t size() const { return by_digest_.size(); }

 private:
  std::map<std::string, ApiToken> by_digest_;  // keyed by sha256 of the token
};

struct HttpRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::map<std::string, std::string> headers;  // lower-case names
  std::string body;
};

struct HttpResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

/// One HTTP status per error kind.
int http_status(ErrorKind kind);

struct JobStatus {
  std::string id;
  std::string state;  // running | finished
  std::size_t done = 0;
  std::size_t total = 0;
  grading::GradingSummary summary;
};

/// The REST surface, independent of the socket layer. Thread-safe; grading
/// jobs run on background threads joined by the destructor.
class Api {
 public:
  Api(store::RecordStore& store, gateway::ProviderRegistry& registry, Config config, TokenStore tokens);
  ~Api();

  Api(const Api&) = delete;
  Api& operator=(const Api&) = delete;

  HttpResponse handle(const HttpRequest& request);

  std::optional<JobStatus> job(const std::string& id) const;
  /// Blocks until every background job has finished.
  void wait_for_jobs();

 private:
  struct Job {
    JobStatus status;
    std::jthread worker;
  };

  HttpResponse route(const HttpRequest& request, const ApiToken& caller);

  store::RecordStore& store_;
  gateway::ProviderRegistry& registry_;
  Config config_;
  TokenStore tokens_;

  mutable std::mutex jobs_mu_;
  std::map<std::string, std::unique_ptr<Job>> jobs_;
  std::int64_t next_job_ = 1;

  friend struct Handlers;
};

}  // namespace aipat::service

AIPAT_ENUM_NAMES(aipat::service::Role, {aipat::service::Role::student, "student"},
                 {aipat::service::Role::instructor, "instructor"}, {aipat::service::Role::operator_, "operator"});
