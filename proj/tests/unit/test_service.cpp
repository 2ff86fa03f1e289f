#include <gtest/gtest.h>

#include <httplib.h>

#include <set>

#include "aipat/digest.hpp"
#include "aipat/service/api.hpp"
#include "aipat/service/config.hpp"
#include "aipat/service/server.hpp"
#include "test_support.hpp"

using namespace aipat;
using namespace aipat::service;

namespace {

const std::string kInstructor = "instructor-token-0001";
const std::string kOperator = "operator-token-00001";
const std::string kAlice = "student-alice-token01";
const std::string kBob = "student-bob-token0001";

TokenStore tokens() {
  return TokenStore::from_json(Json::parse(R"([
    {"token": "instructor-token-0001", "role": "instructor", "subject": "prof"},
    {"token": "operator-token-00001", "role": "operator", "subject": "ops"},
    {"token": "student-alice-token01", "role": "student", "subject": "alice"},
    {"token": "student-bob-token0001", "role": "student", "subject": "bob"}
  ])"));
}

std::string b64(const std::string& s) {
  return base64_encode(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

struct Fixture {
  aipat::testing::TempDir dir;
  ManualClock clock;
  std::unique_ptr<store::RecordStore> st = store::RecordStore::open(dir / "data", clock);
  Config config = [this] {
    auto c = default_config();
    c.data_dir = dir / "data";
    c.distribution_dir = dir / "dist";
    return c;
  }();
  gateway::ProviderRegistry registry = build_registry(config, clock);
  Api api{*st, registry, config, tokens()};

  HttpResponse call(const std::string& method, const std::string& path, const std::string& token,
                    const Json& body = nullptr, std::map<std::string, std::string> query = {}) {
    HttpRequest req;
    req.method = method;
    req.path = path;
    req.query = std::move(query);
    if (!token.empty()) req.headers["authorization"] = "Bearer " + token;
    if (!body.is_null()) req.body = body.dump();
    return api.handle(req);
  }

  Json json(const HttpResponse& r) { return Json::parse(r.body); }

  void register_exam() {
    const auto r = call("POST", "/exams", kInstructor, Json::parse(aipat::testing::read_file(aipat::testing::fixture("midterm_exam.json"))));
    ASSERT_EQ(r.status, 201) << r.body;
  }

  // Typed text and scan agree, so the built-in verifier accepts it.
  HttpResponse submit(const std::string& token, const std::string& student, const std::string& text) {
    Json body{{"exam_id", "midterm"},
              {"answers", {{"q1", {{"transcription", text}, {"scan_base64", b64(text)}, {"scan_ext", "txt"}}}}}};
    if (!student.empty()) body["student_id"] = student;
    return call("POST", "/submissions", token, body);
  }
};

}  // namespace

TEST(Http, StatusForEveryErrorKind) {
  const std::set<int> allowed{401, 403, 404, 409, 422, 500, 502, 503};
  for (ErrorKind k : {ErrorKind::structural, ErrorKind::range, ErrorKind::validation, ErrorKind::not_found,
                      ErrorKind::conflict, ErrorKind::state, ErrorKind::authorization, ErrorKind::authentication,
                      ErrorKind::integrity, ErrorKind::undefined, ErrorKind::io, ErrorKind::provider_auth,
                      ErrorKind::retries_exhausted, ErrorKind::unavailable}) {
    EXPECT_TRUE(allowed.count(http_status(k))) << to_string(k);
  }
  EXPECT_EQ(http_status(ErrorKind::authentication), 401);
  EXPECT_EQ(http_status(ErrorKind::authorization), 403);
  EXPECT_EQ(http_status(ErrorKind::state), 409);
}

TEST(Tokens, Validation) {
  EXPECT_THROW(TokenStore::from_json(Json::parse(R"([{"token":"short","role":"student","subject":"a"}])")), Error);
  EXPECT_THROW(TokenStore::from_json(Json::parse(R"([{"token":"long-enough-token-1","role":"dean","subject":"a"}])")),
               Error);
  EXPECT_THROW(TokenStore::from_json(Json::parse(R"({"token":"x"})")), Error);
  const auto t = tokens();
  EXPECT_EQ(t.size(), 4u);
  EXPECT_EQ(t.find(kAlice)->subject, "alice");
  EXPECT_FALSE(t.find("student-alice-token02"));
}

TEST(Api, AuthenticationAndHealth) {
  Fixture f;
  EXPECT_EQ(f.call("GET", "/health", "").status, 200);
  EXPECT_EQ(f.call("GET", "/exams", "").status, 401);
  EXPECT_EQ(f.call("GET", "/exams", "not-a-real-token-000").status, 401);
  const auto r = f.call("GET", "/nowhere", kInstructor);
  EXPECT_EQ(r.status, 404);
  EXPECT_EQ(f.json(r)["error"]["kind"], "not_found");
  HttpRequest bad;
  bad.method = "POST";
  bad.path = "/exams";
  bad.headers["authorization"] = "Bearer " + kInstructor;
  bad.body = "{not json";
  EXPECT_EQ(f.api.handle(bad).status, 422);
}

TEST(Api, RoleTable) {
  Fixture f;
  f.register_exam();
  struct Case {
    const char* method;
    const char* path;
    const std::string& token;
  };
  const Case forbidden[] = {
      {"POST", "/exams", kAlice},          {"GET", "/submissions", kAlice},
      {"POST", "/verify", kAlice},         {"POST", "/grade-jobs", kAlice},
      {"GET", "/reports/grades", kAlice},  {"POST", "/distributions", kAlice},
      {"POST", "/distributions", kInstructor}, {"GET", "/audit", kInstructor},
      {"GET", "/audit", kAlice},           {"POST", "/submissions/midterm-alice/integrity", kOperator},
      {"POST", "/appeals/ap-000001/finalize", kOperator}, {"POST", "/appeals/ap-000001/propose", kOperator},
  };
  for (const auto& c : forbidden) {
    EXPECT_EQ(f.call(c.method, c.path, c.token, Json::object()).status, 403) << c.method << " " << c.path;
  }
  EXPECT_EQ(f.call("GET", "/audit", kOperator).status, 200);
}

TEST(Api, StudentsSeeOnlyTheirOwnWork) {
  Fixture f;
  f.register_exam();
  EXPECT_EQ(f.submit(kAlice, "", "alice answer").status, 201);
  EXPECT_EQ(f.submit(kAlice, "bob", "impersonation").status, 403);
  EXPECT_EQ(f.submit(kBob, "", "bob answer").status, 201);
  EXPECT_EQ(f.call("GET", "/submissions/midterm-alice", kAlice).status, 200);
  EXPECT_EQ(f.call("GET", "/submissions/midterm-bob", kAlice).status, 403);
  EXPECT_EQ(f.call("GET", "/submissions/midterm-carol", kInstructor).status, 404);

  const Json sneaky{{"exam_id", "midterm"},
                    {"answers", {{"q1", {{"transcription", "x"}, {"scan_ref", "/etc/passwd"}}}}}};
  EXPECT_EQ(f.call("POST", "/submissions", kAlice, sneaky).status, 403);
  // Resubmitting while unverified replaces the answer.
  EXPECT_EQ(f.submit(kAlice, "", "alice answer v2").status, 200);
}

TEST(Api, VerifyGradeAndReport) {
  Fixture f;
  f.register_exam();
  for (const char* s : {"s1", "s2", "s3"}) ASSERT_EQ(f.submit(kInstructor, s, std::string("answer of ") + s).status, 201);

  const Json graders{{"exam_id", "midterm"}, {"graders", {{{"label", "m1"}}}}, {"runs", 2}};
  EXPECT_EQ(f.call("POST", "/grade-jobs", kInstructor, graders).status, 202);
  f.api.wait_for_jobs();
  auto job = f.json(f.call("GET", "/grade-jobs/job-000001", kInstructor));
  EXPECT_EQ(job["state"], "finished");
  EXPECT_EQ(job["summary"]["created"], 0);
  EXPECT_EQ(job["summary"]["failures"], 0);

  const auto v = f.call("POST", "/verify", kInstructor, {{"exam_id", "midterm"}});
  ASSERT_EQ(v.status, 200) << v.body;
  for (const auto& r : f.json(v)["reports"]) EXPECT_EQ(r["status"], "verified") << r.dump();

  EXPECT_EQ(f.call("POST", "/grade-jobs", kInstructor, graders).status, 202);
  f.api.wait_for_jobs();
  job = f.json(f.call("GET", "/grade-jobs/job-000002", kInstructor));
  EXPECT_EQ(job["summary"]["created"], 6) << job.dump();
  EXPECT_EQ(job["done"], job["total"]);

  Json bad_provider{{"exam_id", "midterm"}, {"graders", {{{"label", "x"}, {"provider_id", "nope"}}}}};
  EXPECT_EQ(f.call("POST", "/grade-jobs", kInstructor, bad_provider).status, 422);
  EXPECT_EQ(f.call("GET", "/grade-jobs/job-999999", kInstructor).status, 404);

  const auto grades = f.call("GET", "/reports/grades", kInstructor, nullptr, {{"exam_id", "midterm"}});
  ASSERT_EQ(grades.status, 200);
  EXPECT_EQ(grades.content_type.rfind("text/csv", 0), 0u);
  const auto rel = f.call("GET", "/reports/reliability", kInstructor, nullptr, {{"exam_id", "midterm"}});
  EXPECT_TRUE(rel.status == 200 || rel.status == 422) << rel.body;
  EXPECT_EQ(f.call("GET", "/reports/descriptive", kInstructor, nullptr, {{"exam_id", "midterm"}, {"format", "csv"}}).status,
            200);
  EXPECT_EQ(f.call("GET", "/reports/bogus", kInstructor, nullptr, {{"exam_id", "midterm"}}).status, 404);
}

TEST(Api, Pagination) {
  Fixture f;
  f.register_exam();
  for (int i = 0; i < 7; ++i) f.submit(kInstructor, "s" + std::to_string(i), "text");
  std::set<std::string> seen;
  std::map<std::string, std::string> q{{"limit", "3"}};
  int pages = 0;
  while (true) {
    const auto page = f.json(f.call("GET", "/submissions", kInstructor, nullptr, q));
    ++pages;
    for (const auto& s : page["items"]) EXPECT_TRUE(seen.insert(s["id"].get<std::string>()).second);
    if (page["next_cursor"].is_null()) break;
    q["cursor"] = page["next_cursor"].get<std::string>();
  }
  EXPECT_EQ(seen.size(), 7u);
  EXPECT_EQ(pages, 3);
  EXPECT_EQ(f.call("GET", "/submissions", kInstructor, nullptr, {{"limit", "0"}}).status, 422);
  EXPECT_EQ(f.call("GET", "/submissions", kInstructor, nullptr, {{"cursor", "zz"}}).status, 422);
}

TEST(Api, AppealLifecycle) {
  Fixture f;
  f.register_exam();
  f.submit(kAlice, "", "alice answer");
  f.call("POST", "/verify", kInstructor, {{"exam_id", "midterm"}});
  f.call("POST", "/grade-jobs", kInstructor, {{"exam_id", "midterm"}, {"graders", {{{"label", "m1"}}}}});
  f.api.wait_for_jobs();
  const auto evs = f.json(f.call("GET", "/evaluations", kAlice));
  ASSERT_EQ(evs["items"].size(), 1u);
  EXPECT_FALSE(evs["items"][0].contains("raw_response"));
  const std::string ev = evs["items"][0]["id"];
  EXPECT_EQ(f.json(f.call("GET", "/evaluations", kBob))["items"].size(), 0u);

  EXPECT_EQ(f.call("POST", "/appeals", kBob, {{"evaluation_id", ev}, {"argument", "mine"}}).status, 403);
  const auto filed = f.call("POST", "/appeals", kAlice, {{"evaluation_id", ev}, {"argument", "c2 deserves more"}});
  ASSERT_EQ(filed.status, 201) << filed.body;
  const std::string id = f.json(filed)["id"];
  EXPECT_EQ(f.call("POST", "/appeals", kAlice, {{"evaluation_id", ev}, {"argument", "again"}}).status, 409);
  EXPECT_EQ(f.call("GET", "/appeals/" + id, kBob).status, 403);

  const auto packet = f.call("GET", "/appeals/" + id + "/packet", kInstructor);
  EXPECT_EQ(packet.status, 200);
  const auto review = f.call("POST", "/appeals/" + id + "/review", kInstructor);
  ASSERT_EQ(review.status, 200) << review.body;
  EXPECT_FALSE(f.json(review)["proposal"].is_null());

  const auto fin = f.call("POST", "/appeals/" + id + "/finalize", kInstructor, {{"action", "accept"}});
  ASSERT_EQ(fin.status, 200) << fin.body;
  EXPECT_EQ(f.json(fin)["resolution"]["confirmed_by"], "prof");
  EXPECT_FALSE(f.json(f.call("GET", "/appeals/" + id, kAlice)).contains("resolution"));
  EXPECT_EQ(f.call("POST", "/appeals/" + id + "/publish", kInstructor).status, 200);
  const auto seen = f.json(f.call("GET", "/appeals/" + id, kAlice));
  EXPECT_EQ(seen["state"], "published");
  EXPECT_TRUE(seen.contains("resolution"));
  EXPECT_EQ(f.call("POST", "/appeals/" + id + "/finalize", kInstructor, {{"action", "accept"}}).status, 409);

  const auto report = f.call("GET", "/reports/appeals", kInstructor, nullptr, {{"format", "csv"}});
  EXPECT_EQ(report.status, 200);
}

TEST(Api, Distribution) {
  Fixture f;
  Json body{{"exam_id", "midterm"},
            {"students",
             {{{"student_id", "alice"}, {"files", {{{"name", "feedback.txt"}, {"content_base64", b64("well done")}}}}},
              {{"student_id", "bob"}, {"files", {{{"name", "feedback.txt"}, {"content_base64", b64("see me")}}}}}}}};
  const auto r = f.call("POST", "/distributions", kOperator, body);
  ASSERT_EQ(r.status, 201) << r.body;
  EXPECT_EQ(f.json(r)["built"].size(), 2u);
  EXPECT_TRUE(std::filesystem::exists(f.dir / "dist" / "midterm" / "alice.zip"));
  EXPECT_EQ(f.json(f.call("POST", "/distributions", kOperator, body))["skipped"].size(), 2u);
}

TEST(Server, ServesOverSockets) {
  Fixture f;
  Server server(f.api);
  const int port = server.bind("127.0.0.1", 0);
  ASSERT_GT(port, 0);
  server.start();
  httplib::Client client("127.0.0.1", port);
  auto health = client.Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  auto denied = client.Get("/exams");
  ASSERT_TRUE(denied);
  EXPECT_EQ(denied->status, 401);
  httplib::Headers auth{{"Authorization", "Bearer " + kInstructor}};
  auto posted = client.Post("/exams", auth, aipat::testing::read_file(aipat::testing::fixture("midterm_exam.json")), "application/json");
  ASSERT_TRUE(posted);
  EXPECT_EQ(posted->status, 201);
  auto listed = client.Get("/exams", auth);
  ASSERT_TRUE(listed);
  EXPECT_EQ(Json::parse(listed->body)["items"].size(), 1u);
  auto paged = client.Get("/submissions?limit=2&exam_id=midterm", auth);
  ASSERT_TRUE(paged);
  EXPECT_EQ(paged->status, 200);
  server.stop();
}
