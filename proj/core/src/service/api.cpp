#include "aipat/service/api.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "aipat/analytics.hpp"
#include "aipat/appeals.hpp"
#include "aipat/csv_io.hpp"
#include "aipat/digest.hpp"
#include "aipat/json_io.hpp"
#include "aipat/secure_dist.hpp"
#include "aipat/verifier.hpp"

namespace aipat::service {

// ---------------------------------------------------------------------------
// Tokens

TokenStore TokenStore::from_json(const Json& j) {
  if (!j.is_array()) fail(ErrorKind::structural, "token file must hold a JSON array");
  TokenStore tokens;
  for (const auto& t : j) {
    if (!t.is_object() || !t.contains("token") || !t.contains("role") || !t.contains("subject")) {
      fail(ErrorKind::structural, "each token needs token, role and subject");
    }
    ApiToken token;
    token.token = t.at("token").get<std::string>();
    token.subject = t.at("subject").get<std::string>();
    const auto role = enum_from<Role>(t.at("role").get<std::string>());
    if (!role) fail(ErrorKind::structural, "unknown role '" + t.at("role").get<std::string>() + "'");
    token.role = *role;
    if (token.token.size() < 16) fail(ErrorKind::validation, "tokens must be at least 16 characters");
    if (token.subject.empty()) fail(ErrorKind::validation, "token subject must be non-empty");
    tokens.add(std::move(token));
  }
  return tokens;
}

TokenStore TokenStore::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot read token file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  Json j = Json::parse(buf.str(), nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::structural, "token file " + path.string() + " is not valid JSON");
  return from_json(j);
}

void TokenStore::add(ApiToken token) {
  const std::string digest = sha256_hex(token.token);
  if (!by_digest_.emplace(digest, std::move(token)).second) fail(ErrorKind::conflict, "duplicate token");
}

std::optional<ApiToken> TokenStore::find(std::string_view presented) const {
  auto it = by_digest_.find(sha256_hex(presented));
  if (it == by_digest_.end()) return std::nullopt;
  return it->second;
}

int http_status(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::authentication: return 401;
    case ErrorKind::authorization: return 403;
    case ErrorKind::not_found: return 404;
    case ErrorKind::state:
    case ErrorKind::conflict:
    case ErrorKind::integrity: return 409;
    case ErrorKind::structural:
    case ErrorKind::range:
    case ErrorKind::validation:
    case ErrorKind::undefined: return 422;
    case ErrorKind::provider_auth: return 502;
    case ErrorKind::retries_exhausted:
    case ErrorKind::unavailable: return 503;
    case ErrorKind::io: return 500;
  }
  return 500;
}

// ---------------------------------------------------------------------------
// Handlers

namespace {

HttpResponse json_response(int status, const Json& body) { return {status, "application/json", body.dump()}; }

HttpResponse csv_response(std::string body) { return {200, "text/csv; charset=utf-8", std::move(body)}; }

HttpResponse error_response(ErrorKind kind, const std::string& message) {
  return json_response(http_status(kind), {{"error", {{"kind", std::string(to_string(kind))}, {"message", message}}}});
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : path) {
    if (c == '/') {
      if (!cur.empty()) parts.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) parts.push_back(std::move(cur));
  return parts;
}

Json parse_body(const HttpRequest& req) {
  if (req.body.empty()) return Json::object();
  Json j = Json::parse(req.body, nullptr, false);
  if (j.is_discarded()) fail(ErrorKind::structural, "request body is not valid JSON");
  if (!j.is_object()) fail(ErrorKind::structural, "request body must be a JSON object");
  return j;
}

std::string required_string(const Json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_string() || j.at(key).get<std::string>().empty()) {
    fail(ErrorKind::structural, std::string("'") + key + "' is required");
  }
  return j.at(key).get<std::string>();
}

std::string optional_string(const Json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return "";
  if (!j.at(key).is_string()) fail(ErrorKind::structural, std::string("'") + key + "' must be a string");
  return j.at(key).get<std::string>();
}

std::string query(const HttpRequest& req, const std::string& key) {
  auto it = req.query.find(key);
  return it == req.query.end() ? "" : it->second;
}

void require_role(const ApiToken& caller, std::initializer_list<Role> roles) {
  for (Role r : roles) {
    if (caller.role == r) return;
  }
  fail(ErrorKind::authorization, std::string(enum_name(caller.role)) + " tokens may not call this endpoint");
}

std::map<std::string, Decimal> points_map(const Json& j, const char* key) {
  std::map<std::string, Decimal> out;
  if (!j.contains(key) || j.at(key).is_null()) return out;
  if (!j.at(key).is_object()) fail(ErrorKind::structural, std::string("'") + key + "' must map criterion ids to points");
  for (const auto& [id, v] : j.at(key).items()) out[id] = v.get<Decimal>();
  return out;
}

// Cursor = hex of the last id returned; ids sort lexicographically.
std::string encode_cursor(const std::string& id) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned char c : id) {
    out.push_back(kHex[c >> 4]);
    out.push_back(kHex[c & 15]);
  }
  return out;
}

std::string decode_cursor(const std::string& cursor) {
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    return -1;
  };
  if (cursor.size() % 2 != 0) fail(ErrorKind::structural, "invalid cursor");
  std::string out;
  for (std::size_t i = 0; i < cursor.size(); i += 2) {
    const int hi = nibble(cursor[i]);
    const int lo = nibble(cursor[i + 1]);
    if (hi < 0 || lo < 0) fail(ErrorKind::structural, "invalid cursor");
    out.push_back(static_cast<char>(hi * 16 + lo));
  }
  return out;
}

std::size_t page_limit(const HttpRequest& req) {
  const std::string raw = query(req, "limit");
  if (raw.empty()) return 50;
  try {
    std::size_t used = 0;
    const long v = std::stol(raw, &used);
    if (used != raw.size() || v < 1 || v > 500) throw std::out_of_range("limit");
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    fail(ErrorKind::range, "limit must be an integer in [1, 500]");
  }
}

// `items` sorted by id; returns {"items": [...], "next_cursor": ...}.
template <typename T, typename View>
Json paginate(const std::vector<T>& items, const HttpRequest& req, View view) {
  const std::string after = query(req, "cursor").empty() ? "" : decode_cursor(query(req, "cursor"));
  const std::size_t limit = page_limit(req);
  Json page = Json::array();
  std::string last;
  bool more = false;
  for (const auto& item : items) {
    if (!after.empty() && item.id <= after) continue;
    if (page.size() == limit) {
      more = true;
      break;
    }
    page.push_back(view(item));
    last = item.id;
  }
  return {{"items", page}, {"next_cursor", more ? Json(encode_cursor(last)) : Json(nullptr)}};
}

Json to_json_report(const verifier::VerificationReport& r) {
  return {{"submission_id", r.submission_id},
          {"status", std::string(enum_name(r.status))},
          {"findings", r.findings},
          {"manual_review", r.manual_review},
          {"error", r.error}};
}

Json to_json_summary(const grading::GradingSummary& s) {
  return {{"attempted", s.attempted},      {"created", s.created},         {"skipped", s.skipped},
          {"manual_review", s.manual_review}, {"failures", s.failures},   {"failed_cells", s.failed_cells},
          {"aborted", s.aborted},          {"abort_reason", s.abort_reason}};
}

Json to_json_job(const JobStatus& j) {
  return {{"job_id", j.id}, {"state", j.state}, {"done", j.done}, {"total", j.total},
          {"summary", to_json_summary(j.summary)}};
}

Json to_json_packet(const appeals::ReviewPacket& p) {
  return {{"appeal_id", p.appeal_id},
          {"evaluation_id", p.evaluation_id},
          {"system_prompt", p.system_prompt},
          {"question", p.question},
          {"rubric", p.rubric},
          {"submission_answer", p.submission_answer},
          {"initial_evaluation", p.initial_evaluation},
          {"student_appeal", p.student_appeal}};
}

GraderIdentity grader_from_request(const Json& g) {
  if (!g.is_object()) fail(ErrorKind::structural, "each grader must be an object");
  GraderIdentity id;
  id.kind = GraderKind::model;
  id.label = required_string(g, "label");
  id.provider_id = optional_string(g, "provider_id");
  if (id.provider_id.empty()) id.provider_id = "mock";
  if (g.contains("temperature")) id.temperature = g.at("temperature").get<Decimal>();
  return id;
}

}  // namespace

struct Handlers {
  Api& api;
  const HttpRequest& req;
  const ApiToken& caller;

  store::RecordStore& store() { return api.store_; }
  const Config& config() { return api.config_; }
  bool is_student() const { return caller.role == Role::student; }

  void require_own_submission(const Submission& s) {
    if (is_student() && s.student_id != caller.subject) {
      fail(ErrorKind::authorization, "submission belongs to another student");
    }
  }

  Submission load_submission(const std::string& id) {
    auto s = store().submission(id);
    if (!s) fail(ErrorKind::not_found, "unknown submission '" + id + "'");
    return *s;
  }

  Appeal load_appeal(const std::string& id) {
    auto a = store().appeal(id);
    if (!a) fail(ErrorKind::not_found, "unknown appeal '" + id + "'");
    if (is_student() && a->student_id != caller.subject) fail(ErrorKind::authorization, "appeal belongs to another student");
    return *a;
  }

  // Students see the outcome only once it is published.
  Json appeal_view(const Appeal& a) {
    Json j = a;
    const bool released = a.state == AppealState::published;
    if (is_student()) {
      j.erase("proposal");
      j.erase("manual_reason");
      j.erase("needs_manual");
    }
    if (!is_student() || released) {
      if (auto r = store().resolution(a.id)) j["resolution"] = *r;
    }
    return j;
  }

  Json evaluation_view(const Evaluation& e) {
    Json j = e;
    j["effective_total"] = store().effective_total(e.id);
    if (is_student()) {
      j.erase("raw_response");
      j.erase("prompt_digest");
    }
    return j;
  }

  // -- exams ---------------------------------------------------------------
  HttpResponse post_exam() {
    require_role(caller, {Role::instructor, Role::operator_});
    const auto doc = parse_exam_document(parse_body(req));
    store().register_exam(doc, {caller.subject, AuditAction::exam_registered, doc.exam.id, ""});
    return json_response(201, Json(doc.exam));
  }

  HttpResponse get_exams() {
    Json out = Json::array();
    for (const auto& e : store().exams()) out.push_back(e);
    return json_response(200, {{"items", out}});
  }

  // -- submissions ---------------------------------------------------------
  HttpResponse post_submission() {
    const Json body = parse_body(req);
    const std::string exam_id = required_string(body, "exam_id");
    std::string student = optional_string(body, "student_id");
    if (is_student()) {
      if (!student.empty() && student != caller.subject) fail(ErrorKind::authorization, "students submit only for themselves");
      student = caller.subject;
    }
    if (student.empty()) fail(ErrorKind::structural, "'student_id' is required");
    if (!store().exam(exam_id)) fail(ErrorKind::not_found, "unknown exam '" + exam_id + "'");
    if (!body.contains("answers") || !body["answers"].is_object() || body["answers"].empty()) {
      fail(ErrorKind::structural, "'answers' must map question ids to answers");
    }

    std::map<std::string, Answer> answers;
    for (const auto& [qid, a] : body["answers"].items()) {
      if (!a.is_object()) fail(ErrorKind::structural, "answer for '" + qid + "' must be an object");
      Answer answer;
      answer.transcription = optional_string(a, "transcription");
      const std::string scan_b64 = optional_string(a, "scan_base64");
      const std::string scan_ref = optional_string(a, "scan_ref");
      if (!scan_b64.empty()) {
        const auto bytes = base64_decode(scan_b64);
        const std::string ext = optional_string(a, "scan_ext");
        if (ext.empty()) fail(ErrorKind::structural, "'scan_ext' is required with 'scan_base64'");
        answer.scan_ref = verifier::store_blob(std::span<const std::uint8_t>(bytes), ext, store().blob_dir());
      } else if (!scan_ref.empty()) {
        // Server-side paths would let a caller read arbitrary files.
        if (scan_ref.rfind("blob:", 0) != 0 && caller.role != Role::operator_) {
          fail(ErrorKind::authorization, "only operators may reference server-side scan paths");
        }
        answer.scan_ref = scan_ref;
      }
      answers[qid] = std::move(answer);
    }

    const std::string id = csv_io::submission_id_for(exam_id, student);
    Submission sub;
    int status = 201;
    if (auto existing = store().submission(id)) {
      if (existing->integrity_status != IntegrityStatus::unverified) {
        fail(ErrorKind::state, "submission '" + id + "' is " + std::string(enum_name(existing->integrity_status)) +
                                   "; answers can no longer change");
      }
      sub = *existing;
      for (auto& [q, a] : answers) sub.answers[q] = std::move(a);
      status = 200;
    } else {
      sub.id = id;
      sub.student_id = student;
      sub.exam_id = exam_id;
      sub.received_at = store().clock().now();
      sub.answers = std::move(answers);
    }
    store().upsert_submission(sub, {caller.subject, AuditAction::submission_ingested, id, ""});
    return json_response(status, Json(*store().submission(id)));
  }

  HttpResponse get_submission(const std::string& id) {
    const auto s = load_submission(id);
    require_own_submission(s);
    return json_response(200, Json(s));
  }

  HttpResponse list_submissions() {
    require_role(caller, {Role::instructor, Role::operator_});
    auto subs = store().submissions(query(req, "exam_id"));
    const std::string status = query(req, "status");
    if (!status.empty()) {
      const auto s = enum_from<IntegrityStatus>(status);
      if (!s) fail(ErrorKind::validation, "unknown integrity status '" + status + "'");
      std::erase_if(subs, [&](const Submission& x) { return x.integrity_status != *s; });
    }
    return json_response(200, paginate(subs, req, [](const Submission& s) { return Json(s); }));
  }

  HttpResponse post_verify() {
    require_role(caller, {Role::instructor, Role::operator_});
    const Json body = parse_body(req);
    auto& adjudicator = api.registry_.get(config().verifier_provider);
    verifier::VerifierConfig vc = config().verifier;
    vc.blob_dir = store().blob_dir();
    const std::string sub_id = optional_string(body, "submission_id");
    if (!sub_id.empty()) {
      load_submission(sub_id);
      return json_response(200, to_json_report(verifier::verify_and_record(store(), sub_id, adjudicator,
                                                                           config().integrity, vc, caller.subject)));
    }
    const std::string exam_id = required_string(body, "exam_id");
    if (!store().exam(exam_id)) fail(ErrorKind::not_found, "unknown exam '" + exam_id + "'");
    Json reports = Json::array();
    for (const auto& s : store().submissions(exam_id)) {
      if (s.integrity_status != IntegrityStatus::unverified) continue;
      reports.push_back(
          to_json_report(verifier::verify_and_record(store(), s.id, adjudicator, config().integrity, vc, caller.subject)));
    }
    return json_response(200, {{"reports", reports}});
  }

  HttpResponse post_integrity(const std::string& id) {
    require_role(caller, {Role::instructor});
    const Json body = parse_body(req);
    const std::string action = required_string(body, "action");
    const std::string reason = optional_string(body, "reason");
    load_submission(id);
    Submission s;
    if (action == "confirm_penalty") {
      s = verifier::confirm_penalty(store(), id, caller.subject, reason);
    } else if (action == "clear") {
      s = verifier::clear_integrity_flag(store(), id, caller.subject, reason);
    } else {
      fail(ErrorKind::validation, "action must be confirm_penalty or clear");
    }
    return json_response(200, Json(s));
  }

  // -- grading -------------------------------------------------------------
  HttpResponse post_grade_job() {
    require_role(caller, {Role::instructor, Role::operator_});
    const Json body = parse_body(req);
    grading::GradingJob job;
    job.exam_id = required_string(body, "exam_id");
    if (!store().exam(job.exam_id)) fail(ErrorKind::not_found, "unknown exam '" + job.exam_id + "'");
    if (body.contains("submission_ids")) job.submission_ids = body["submission_ids"].get<std::vector<std::string>>();
    if (!body.contains("graders") || !body["graders"].is_array() || body["graders"].empty()) {
      fail(ErrorKind::structural, "'graders' must be a non-empty array");
    }
    for (const auto& g : body["graders"]) {
      auto id = grader_from_request(g);
      if (!api.registry_.contains(id.provider_id)) fail(ErrorKind::validation, "unknown provider '" + id.provider_id + "'");
      job.graders.push_back(std::move(id));
    }
    job.runs_per_grader = body.value("runs", 1);
    if (job.runs_per_grader < 1) fail(ErrorKind::range, "runs must be >= 1");

    std::lock_guard lock(api.jobs_mu_);
    char id_buf[32];
    std::snprintf(id_buf, sizeof id_buf, "job-%06lld", static_cast<long long>(api.next_job_++));
    auto entry = std::make_unique<Api::Job>();
    entry->status.id = id_buf;
    entry->status.state = "running";
    const std::string job_id = id_buf;
    Api* self = &api;
    grading::GradingConfig gc = config().grading;
    gc.actor = caller.subject;
    gc.on_progress = [self, job_id](std::size_t done, std::size_t total) {
      std::lock_guard l(self->jobs_mu_);
      auto& st = self->jobs_.at(job_id)->status;
      st.done = done;
      st.total = total;
    };
    const JobStatus snapshot = entry->status;
    auto* raw = entry.get();
    api.jobs_.emplace(job_id, std::move(entry));
    raw->worker = std::jthread([self, job_id, job, gc] {
      grading::GradingSummary summary;
      try {
        summary = grading::grade_batch(job, self->registry_, self->store_, gc);
      } catch (const std::exception& e) {
        summary.aborted = true;
        summary.abort_reason = e.what();
      }
      std::lock_guard l(self->jobs_mu_);
      auto& st = self->jobs_.at(job_id)->status;
      st.summary = std::move(summary);
      st.state = "finished";
    });
    return json_response(202, to_json_job(snapshot));
  }

  HttpResponse get_grade_job(const std::string& id) {
    require_role(caller, {Role::instructor, Role::operator_});
    auto st = api.job(id);
    if (!st) fail(ErrorKind::not_found, "unknown grading job '" + id + "'");
    return json_response(200, to_json_job(*st));
  }

  HttpResponse get_evaluation(const std::string& id) {
    auto e = store().evaluation(id);
    if (!e) fail(ErrorKind::not_found, "unknown evaluation '" + id + "'");
    if (is_student()) require_own_submission(load_submission(e->submission_id));
    return json_response(200, evaluation_view(*e));
  }

  HttpResponse list_evaluations() {
    store::EvaluationFilter f;
    f.exam_id = query(req, "exam_id");
    f.submission_id = query(req, "submission_id");
    f.question_id = query(req, "question_id");
    f.grader_label = query(req, "grader_label");
    auto evs = store().evaluations(f);
    if (is_student()) {
      std::set<std::string> own;
      for (const auto& s : store().submissions()) {
        if (s.student_id == caller.subject) own.insert(s.id);
      }
      std::erase_if(evs, [&](const Evaluation& e) { return !own.count(e.submission_id); });
    }
    std::sort(evs.begin(), evs.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return json_response(200, paginate(evs, req, [this](const Evaluation& e) { return evaluation_view(e); }));
  }

  // -- appeals -------------------------------------------------------------
  HttpResponse post_appeal() {
    const Json body = parse_body(req);
    const std::string evaluation_id = required_string(body, "evaluation_id");
    const std::string argument = optional_string(body, "argument");
    std::string student = optional_string(body, "student_id");
    if (is_student()) {
      if (!student.empty() && student != caller.subject) fail(ErrorKind::authorization, "students appeal only for themselves");
      student = caller.subject;
    }
    if (student.empty()) fail(ErrorKind::structural, "'student_id' is required");
    const Appeal a = appeals::submit_appeal(store(), evaluation_id, student, argument, config().appeal);
    return json_response(201, appeal_view(a));
  }

  HttpResponse list_appeals() {
    std::optional<AppealState> state;
    if (const std::string s = query(req, "state"); !s.empty()) {
      state = enum_from<AppealState>(s);
      if (!state) fail(ErrorKind::validation, "unknown appeal state '" + s + "'");
    }
    auto items = store().appeals(state);
    if (is_student()) std::erase_if(items, [&](const Appeal& a) { return a.student_id != caller.subject; });
    if (const std::string m = query(req, "needs_manual"); !m.empty()) {
      const bool want = m == "true" || m == "1";
      std::erase_if(items, [&](const Appeal& a) { return a.needs_manual != want; });
    }
    return json_response(200, paginate(items, req, [this](const Appeal& a) { return appeal_view(a); }));
  }

  HttpResponse get_appeal(const std::string& id) { return json_response(200, appeal_view(load_appeal(id))); }

  HttpResponse get_packet(const std::string& id) {
    require_role(caller, {Role::instructor, Role::operator_});
    const Appeal a = load_appeal(id);
    const auto packet = appeals::review_packet(store(), id);
    Json j = to_json_packet(packet);
    j["appeal"] = appeal_view(a);
    j["prompt"] = appeals::serialize_packet(packet);
    return json_response(200, j);
  }

  HttpResponse post_review(const std::string& id) {
    require_role(caller, {Role::instructor, Role::operator_});
    load_appeal(id);
    const auto packet = appeals::assemble_review_packet(store(), id, caller.subject);
    auto& reviewer = api.registry_.get(config().reviewer_provider);
    const auto proposal = appeals::review_appeal(store(), packet, reviewer, config().reviewer, config().appeal, caller.subject);
    return json_response(200, {{"appeal", appeal_view(*store().appeal(id))},
                               {"proposal", proposal ? Json(*proposal) : Json(nullptr)}});
  }

  HttpResponse post_propose(const std::string& id) {
    require_role(caller, {Role::instructor});
    const Json body = parse_body(req);
    const Appeal a = load_appeal(id);
    if (a.state == AppealState::submitted) appeals::assemble_review_packet(store(), id, caller.subject);
    const auto r = appeals::propose_manual(store(), id, caller.subject, points_map(body, "adjustments"),
                                           required_string(body, "explanation"));
    return json_response(200, {{"appeal", appeal_view(*store().appeal(id))}, {"proposal", r}});
  }

  HttpResponse post_finalize(const std::string& id) {
    require_role(caller, {Role::instructor});
    const Json body = parse_body(req);
    load_appeal(id);
    appeals::ReviewerDecision d;
    const std::string action = required_string(body, "action");
    const auto parsed = enum_from<ReviewerAction>(action);
    if (!parsed) fail(ErrorKind::validation, "action must be accept, override or reject_to_manual");
    d.action = *parsed;
    d.adjustments = points_map(body, "adjustments");
    d.explanation = optional_string(body, "explanation");
    const auto r = appeals::finalize_resolution(store(), id, d, caller.subject);
    return json_response(200, {{"appeal", appeal_view(*store().appeal(id))}, {"resolution", r ? Json(*r) : Json(nullptr)}});
  }

  HttpResponse post_publish(const std::string& id) {
    require_role(caller, {Role::instructor, Role::operator_});
    load_appeal(id);
    return json_response(200, appeal_view(appeals::publish_resolution(store(), id, caller.subject)));
  }

  // -- reports -------------------------------------------------------------
  HttpResponse get_report(const std::string& kind) {
    require_role(caller, {Role::instructor, Role::operator_});
    const std::string format = query(req, "format").empty() ? "json" : query(req, "format");
    if (format != "json" && format != "csv") fail(ErrorKind::validation, "format must be json or csv");
    const bool csv = format == "csv";
    const std::string exam_id = query(req, "exam_id");

    if (kind == "appeals" || kind == "appeals-export") {
      const std::string rows = appeals::export_appeals_csv(store(), exam_id);
      if (kind == "appeals-export") return csv_response(rows);
      auto parsed = analytics::read_appeal_rows(rows);
      const auto report = analytics::appeal_report(parsed.rows, parsed.rejected);
      return csv ? csv_response(analytics::appeal_report_csv(report)) : json_response(200, analytics::appeal_report_json(report));
    }

    if (exam_id.empty()) fail(ErrorKind::structural, "'exam_id' query parameter is required");
    if (!store().exam(exam_id)) fail(ErrorKind::not_found, "unknown exam '" + exam_id + "'");
    const std::string grades = csv_io::export_grades_csv(store(), exam_id, {query(req, "grader_label")});
    if (kind == "grades") return csv_response(grades);
    const std::string norm = query(req, "normalized");
    const auto columns = analytics::read_grade_columns(grades, norm == "true" || norm == "1");
    if (kind == "descriptive") {
      return csv ? csv_response(analytics::descriptive_csv(columns)) : json_response(200, analytics::descriptive_json(columns));
    }
    if (kind == "correlation") {
      return csv ? csv_response(analytics::correlation_csv(columns)) : json_response(200, analytics::correlation_json(columns));
    }
    if (kind == "reliability") {
      const auto m = analytics::reliability_matrix(columns);
      return csv ? csv_response(analytics::reliability_csv(m)) : json_response(200, analytics::reliability_json(m));
    }
    fail(ErrorKind::not_found, "unknown report '" + kind + "'");
  }

  // -- distribution --------------------------------------------------------
  HttpResponse post_distribution() {
    require_role(caller, {Role::operator_});
    const Json body = parse_body(req);
    const std::string exam_id = required_string(body, "exam_id");
    if (!body.contains("students") || !body["students"].is_array()) {
      fail(ErrorKind::structural, "'students' must be an array");
    }
    std::vector<dist::ArchiveSpec> specs;
    for (const auto& s : body["students"]) {
      dist::ArchiveSpec spec;
      spec.student_id = required_string(s, "student_id");
      if (!s.contains("files") || !s["files"].is_array()) fail(ErrorKind::structural, "'files' must be an array");
      for (const auto& f : s["files"]) {
        dist::ArchiveFile file;
        file.name = required_string(f, "name");
        if (const std::string path = optional_string(f, "path"); !path.empty()) {
          file.source = path;
        } else {
          file.bytes = base64_decode(optional_string(f, "content_base64"));
        }
        spec.files.push_back(std::move(file));
      }
      specs.push_back(std::move(spec));
    }
    const auto report =
        dist::build_distribution(store(), exam_id, specs, config().dist_dir(), config().password, caller.subject);
    Json failures = Json::array();
    for (const auto& [student, reason] : report.failures) failures.push_back({{"student_id", student}, {"reason", reason}});
    return json_response(report.failures.empty() ? 201 : 207,
                         {{"built", report.built}, {"skipped", report.skipped}, {"failures", failures}});
  }

  HttpResponse get_audit() {
    require_role(caller, {Role::operator_});
    const auto events = store().audit_events();
    Json items = Json::array();
    std::int64_t after = 0;
    if (const std::string c = query(req, "after"); !c.empty()) {
      try {
        after = std::stoll(c);
      } catch (const std::exception&) {
        fail(ErrorKind::structural, "'after' must be an audit sequence number");
      }
    }
    const std::size_t limit = page_limit(req);
    for (const auto& e : events) {
      if (e.seq <= after) continue;
      if (items.size() == limit) break;
      items.push_back(e);
    }
    return json_response(200, {{"items", items}});
  }
};

// ---------------------------------------------------------------------------
// Api

Api::Api(store::RecordStore& store, gateway::ProviderRegistry& registry, Config config, TokenStore tokens)
    : store_(store), registry_(registry), config_(std::move(config)), tokens_(std::move(tokens)) {
  config_.verifier.blob_dir = store_.blob_dir();
}

Api::~Api() { wait_for_jobs(); }

void Api::wait_for_jobs() {
  std::vector<Job*> running;
  {
    std::lock_guard lock(jobs_mu_);
    for (auto& [id, job] : jobs_) running.push_back(job.get());
  }
  static std::mutex join_mu;
  std::lock_guard join_lock(join_mu);
  for (Job* job : running) {
    if (job->worker.joinable()) job->worker.join();
  }
}

std::optional<JobStatus> Api::job(const std::string& id) const {
  std::lock_guard lock(jobs_mu_);
  auto it = jobs_.find(id);
  if (it == jobs_.end()) return std::nullopt;
  return it->second->status;
}

HttpResponse Api::handle(const HttpRequest& request) {
  try {
    if (request.method == "GET" && (request.path == "/health" || request.path == "/healthz")) {
      return json_response(200, {{"status", "ok"}});
    }
    auto auth = request.headers.find("authorization");
    constexpr std::string_view kBearer = "Bearer ";
    if (auth == request.headers.end() || auth->second.rfind(kBearer, 0) != 0) {
      fail(ErrorKind::authentication, "missing bearer token");
    }
    const auto caller = tokens_.find(std::string_view(auth->second).substr(kBearer.size()));
    if (!caller) fail(ErrorKind::authentication, "unknown token");
    return route(request, *caller);
  } catch (const Error& e) {
    return error_response(e.kind(), e.what());
  } catch (const nlohmann::json::exception& e) {
    return error_response(ErrorKind::structural, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return error_response(ErrorKind::io, e.what());
  } catch (const std::exception& e) {
    return error_response(ErrorKind::io, std::string("internal error: ") + e.what());
  }
}

HttpResponse Api::route(const HttpRequest& req, const ApiToken& caller) {
  Handlers h{*this, req, caller};
  const auto p = split_path(req.path);
  const std::string& m = req.method;
  const std::size_t n = p.size();
  auto is = [&](std::initializer_list<std::string_view> parts) {
    if (parts.size() != n) return false;
    std::size_t i = 0;
    for (auto part : parts) {
      if (part != "*" && part != p[i]) return false;
      ++i;
    }
    return true;
  };
  auto method_not_allowed = [&]() -> HttpResponse {
    fail(ErrorKind::not_found, "no route for " + m + " " + req.path);
  };

  if (is({"exams"})) return m == "POST" ? h.post_exam() : m == "GET" ? h.get_exams() : method_not_allowed();
  if (is({"submissions"})) return m == "POST" ? h.post_submission() : m == "GET" ? h.list_submissions() : method_not_allowed();
  if (is({"submissions", "*"}) && m == "GET") return h.get_submission(p[1]);
  if (is({"submissions", "*", "integrity"}) && m == "POST") return h.post_integrity(p[1]);
  if (is({"verify"}) && m == "POST") return h.post_verify();
  if (is({"grade-jobs"}) && m == "POST") return h.post_grade_job();
  if (is({"grade-jobs", "*"}) && m == "GET") return h.get_grade_job(p[1]);
  if (is({"evaluations"}) && m == "GET") return h.list_evaluations();
  if (is({"evaluations", "*"}) && m == "GET") return h.get_evaluation(p[1]);
  if (is({"appeals"})) return m == "POST" ? h.post_appeal() : m == "GET" ? h.list_appeals() : method_not_allowed();
  if (is({"appeals", "*"}) && m == "GET") return h.get_appeal(p[1]);
  if (is({"appeals", "*", "packet"}) && m == "GET") return h.get_packet(p[1]);
  if (is({"appeals", "*", "review"}) && m == "POST") return h.post_review(p[1]);
  if (is({"appeals", "*", "propose"}) && m == "POST") return h.post_propose(p[1]);
  if (is({"appeals", "*", "finalize"}) && m == "POST") return h.post_finalize(p[1]);
  if (is({"appeals", "*", "publish"}) && m == "POST") return h.post_publish(p[1]);
  if (is({"reports", "*"}) && m == "GET") return h.get_report(p[1]);
  if (is({"distributions"}) && m == "POST") return h.post_distribution();
  if (is({"audit"}) && m == "GET") return h.get_audit();
  return method_not_allowed();
}

}  // namespace aipat::service
