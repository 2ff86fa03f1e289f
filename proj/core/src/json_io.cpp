#include "aipat/json_io.hpp"

#include "aipat/error.hpp"

namespace aipat {

namespace {

const Json& field(const Json& j, const char* key) {
  if (!j.is_object()) fail(ErrorKind::structural, std::string("expected object while reading '") + key + "'");
  auto it = j.find(key);
  if (it == j.end()) fail(ErrorKind::structural, std::string("missing field '") + key + "'");
  return *it;
}

std::string get_string(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_string()) fail(ErrorKind::structural, std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

std::string get_string_or(const Json& j, const char* key, std::string fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  return get_string(j, key);
}

int get_int_or(const Json& j, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  const Json& v = j.at(key);
  if (!v.is_number_integer()) fail(ErrorKind::structural, std::string("field '") + key + "' must be an integer");
  return v.get<int>();
}

Decimal get_decimal(const Json& j, const char* key) { return field(j, key).get<Decimal>(); }

Decimal get_decimal_or(const Json& j, const char* key, Decimal fallback) {
  if (!j.contains(key)) return fallback;
  return get_decimal(j, key);
}

template <typename E>
E get_enum(const Json& j, const char* key) {
  const std::string name = get_string(j, key);
  auto e = enum_from<E>(name);
  if (!e) fail(ErrorKind::structural, "unknown value '" + name + "' for field '" + key + "'");
  return *e;
}

template <typename E>
E get_enum_or(const Json& j, const char* key, E fallback) {
  if (!j.contains(key)) return fallback;
  return get_enum<E>(j, key);
}

Timestamp get_time(const Json& j, const char* key) {
  const std::string s = get_string(j, key);
  auto t = parse_timestamp(s);
  if (!t) fail(ErrorKind::structural, "bad timestamp '" + s + "' in field '" + key + "'");
  return *t;
}

Timestamp get_time_or(const Json& j, const char* key) {
  if (!j.contains(key)) return Timestamp{};
  return get_time(j, key);
}

template <typename T>
std::vector<T> get_list(const Json& j, const char* key) {
  if (!j.contains(key)) return {};
  const Json& v = j.at(key);
  if (!v.is_array()) fail(ErrorKind::structural, std::string("field '") + key + "' must be an array");
  std::vector<T> out;
  out.reserve(v.size());
  for (const auto& item : v) out.push_back(item.get<T>());
  return out;
}

std::string name(auto e) { return std::string(enum_name(e)); }

}  // namespace

void to_json(Json& j, const Decimal& d) {
  if (d.hundredths() % Decimal::kScale == 0) {
    j = d.hundredths() / Decimal::kScale;
  } else {
    j = d.to_double();
  }
}

void from_json(const Json& j, Decimal& d) {
  std::optional<Decimal> parsed;
  if (j.is_number_integer()) {
    const bool fits = j.is_number_unsigned() ? j.get<std::uint64_t>() <= 1'000'000'000'000'000ULL
                                             : j.get<std::int64_t>() >= -1'000'000'000'000'000LL &&
                                                   j.get<std::int64_t>() <= 1'000'000'000'000'000LL;
    if (fits) parsed = Decimal::from_hundredths(j.get<std::int64_t>() * Decimal::kScale);
  } else if (j.is_number()) {
    parsed = Decimal::from_double(j.get<double>());
  } else if (j.is_string()) {
    parsed = Decimal::parse(j.get<std::string>());
  }
  if (!parsed) fail(ErrorKind::structural, "expected a decimal with at most two fractional digits, got " + j.dump());
  d = *parsed;
}

void to_json(Json& j, const Question& q) {
  j = Json{{"id", q.id},
           {"exam_id", q.exam_id},
           {"text", q.text},
           {"language_context", name(q.language_context)},
           {"max_points", q.max_points}};
}

void from_json(const Json& j, Question& q) {
  q.id = get_string(j, "id");
  q.exam_id = get_string_or(j, "exam_id", "");
  q.text = get_string(j, "text");
  q.language_context = get_enum_or(j, "language_context", LanguageContext::either);
  q.max_points = get_decimal(j, "max_points");
}

void to_json(Json& j, const RubricCriterion& c) {
  j = Json{{"id", c.id},
           {"title", c.title},
           {"max_points", c.max_points},
           {"full_descriptor", c.full_descriptor},
           {"partial_descriptor", c.partial_descriptor},
           {"none_descriptor", c.none_descriptor}};
}

void from_json(const Json& j, RubricCriterion& c) {
  c.id = get_string(j, "id");
  c.title = get_string_or(j, "title", "");
  c.max_points = get_decimal(j, "max_points");
  c.full_descriptor = get_string(j, "full_descriptor");
  c.partial_descriptor = get_string(j, "partial_descriptor");
  c.none_descriptor = get_string(j, "none_descriptor");
}

void to_json(Json& j, const CommonMistake& m) {
  j = Json{{"description", m.description}, {"suggested_penalty", m.suggested_penalty}};
}

void from_json(const Json& j, CommonMistake& m) {
  m.description = get_string(j, "description");
  m.suggested_penalty = get_decimal(j, "suggested_penalty");
}

void to_json(Json& j, const Rubric& r) {
  j = Json{{"question_id", r.question_id}, {"criteria", r.criteria}, {"common_mistakes", r.common_mistakes}};
}

void from_json(const Json& j, Rubric& r) {
  r.question_id = get_string(j, "question_id");
  r.criteria = get_list<RubricCriterion>(j, "criteria");
  r.common_mistakes = get_list<CommonMistake>(j, "common_mistakes");
}

void to_json(Json& j, const Exam& e) {
  j = Json{{"id", e.id}, {"kind", name(e.kind)}, {"questions", e.questions}, {"max_total", e.max_total}};
  if (!e.system_prompt.empty()) j["system_prompt"] = e.system_prompt;
}

void from_json(const Json& j, Exam& e) {
  e.id = get_string(j, "id");
  e.kind = get_enum<ExamKind>(j, "kind");
  e.questions = get_list<Question>(j, "questions");
  for (auto& q : e.questions) {
    if (q.exam_id.empty()) q.exam_id = e.id;
  }
  e.max_total = get_decimal(j, "max_total");
  e.system_prompt = get_string_or(j, "system_prompt", "");
}

void to_json(Json& j, const Discrepancy& d) {
  j = Json{{"question_id", d.question_id},
           {"handwritten_excerpt", d.handwritten_excerpt},
           {"typed_excerpt", d.typed_excerpt},
           {"severity", name(d.severity)}};
}

void from_json(const Json& j, Discrepancy& d) {
  d.question_id = get_string_or(j, "question_id", "");
  d.handwritten_excerpt = get_string(j, "handwritten_excerpt");
  d.typed_excerpt = get_string(j, "typed_excerpt");
  d.severity = get_enum<Severity>(j, "severity");
}

void to_json(Json& j, const VerificationVerdict& v) {
  j = Json{{"verdict", name(v.verdict)}, {"discrepancies", v.discrepancies}, {"confidence", v.confidence}};
}

void from_json(const Json& j, VerificationVerdict& v) {
  v.verdict = get_enum<Verdict>(j, "verdict");
  v.discrepancies = get_list<Discrepancy>(j, "discrepancies");
  v.confidence = j.contains("confidence") ? j.at("confidence").get<double>() : 1.0;
}

void to_json(Json& j, const IntegrityFinding& f) {
  j = Json{{"question_id", f.question_id}, {"verdict", f.verdict}, {"action", name(f.action)}};
}

void from_json(const Json& j, IntegrityFinding& f) {
  f.question_id = get_string(j, "question_id");
  f.verdict = field(j, "verdict").get<VerificationVerdict>();
  f.action = get_enum<IntegrityAction>(j, "action");
}

void to_json(Json& j, const Answer& a) { j = Json{{"scan_ref", a.scan_ref}, {"transcription", a.transcription}}; }

void from_json(const Json& j, Answer& a) {
  a.scan_ref = get_string_or(j, "scan_ref", "");
  a.transcription = get_string(j, "transcription");
}

void to_json(Json& j, const Submission& s) {
  Json penalties_pending = Json::object();
  for (const auto& [q, f] : s.pending_penalties) penalties_pending[q] = f;
  Json penalties_confirmed = Json::object();
  for (const auto& [q, f] : s.confirmed_penalties) penalties_confirmed[q] = f;
  Json answers = Json::object();
  for (const auto& [q, a] : s.answers) answers[q] = a;
  j = Json{{"id", s.id},
           {"student_id", s.student_id},
           {"exam_id", s.exam_id},
           {"answers", answers},
           {"received_at", format_timestamp(s.received_at)},
           {"integrity_status", name(s.integrity_status)},
           {"findings", s.findings},
           {"pending_penalties", penalties_pending},
           {"confirmed_penalties", penalties_confirmed},
           {"manual_verification", s.manual_verification}};
}

void from_json(const Json& j, Submission& s) {
  s.id = get_string(j, "id");
  s.student_id = get_string(j, "student_id");
  s.exam_id = get_string(j, "exam_id");
  s.answers.clear();
  for (const auto& [q, a] : field(j, "answers").items()) s.answers[q] = a.get<Answer>();
  s.received_at = get_time_or(j, "received_at");
  s.integrity_status = get_enum_or(j, "integrity_status", IntegrityStatus::unverified);
  s.findings = get_list<IntegrityFinding>(j, "findings");
  s.pending_penalties.clear();
  s.confirmed_penalties.clear();
  if (j.contains("pending_penalties")) {
    for (const auto& [q, f] : j.at("pending_penalties").items()) s.pending_penalties[q] = f.get<Decimal>();
  }
  if (j.contains("confirmed_penalties")) {
    for (const auto& [q, f] : j.at("confirmed_penalties").items()) s.confirmed_penalties[q] = f.get<Decimal>();
  }
  s.manual_verification = j.value("manual_verification", false);
}

void to_json(Json& j, const GraderIdentity& g) {
  j = Json{{"kind", name(g.kind)}, {"label", g.label}};
  if (g.kind == GraderKind::model) {
    j["temperature"] = g.temperature;
    j["run_index"] = g.run_index;
    j["provider_id"] = g.provider_id;
  } else {
    j["session_index"] = g.session_index;
  }
}

void from_json(const Json& j, GraderIdentity& g) {
  g.kind = get_enum_or(j, "kind", GraderKind::model);
  g.label = get_string(j, "label");
  g.temperature = get_decimal_or(j, "temperature", kZero);
  g.run_index = get_int_or(j, "run_index", 1);
  g.session_index = get_int_or(j, "session_index", 1);
  g.provider_id = get_string_or(j, "provider_id", "");
  if (g.temperature < kZero) fail(ErrorKind::range, "temperature must be >= 0");
  if (g.run_index < 1 || g.session_index < 1) fail(ErrorKind::range, "run/session index must be positive");
}

void to_json(Json& j, const CriterionScore& c) {
  j = Json{{"criterion_id", c.criterion_id},
           {"tier", name(c.tier)},
           {"points", c.points},
           {"justification", c.justification}};
}

void from_json(const Json& j, CriterionScore& c) {
  c.criterion_id = get_string(j, "criterion_id");
  c.tier = get_enum<Tier>(j, "tier");
  c.points = get_decimal(j, "points");
  c.justification = get_string_or(j, "justification", "");
}

void to_json(Json& j, const ParsedEvaluation& p) {
  j = Json{{"criteria", p.per_criterion}, {"overall_feedback", p.overall_feedback}, {"total", p.total}};
}

void from_json(const Json& j, ParsedEvaluation& p) {
  p.per_criterion = get_list<CriterionScore>(j, "criteria");
  p.overall_feedback = get_string_or(j, "overall_feedback", "");
  p.total = get_decimal(j, "total");
}

void to_json(Json& j, const Evaluation& e) {
  j = Json{{"id", e.id},
           {"submission_id", e.submission_id},
           {"question_id", e.question_id},
           {"grader", e.grader},
           {"parsed", e.parsed},
           {"status", name(e.status)},
           {"created_at", format_timestamp(e.created_at)},
           {"prompt_digest", e.prompt_digest}};
  if (!e.raw_response.empty()) j["raw_response"] = e.raw_response;
}

void from_json(const Json& j, Evaluation& e) {
  e.id = get_string(j, "id");
  e.submission_id = get_string(j, "submission_id");
  e.question_id = get_string(j, "question_id");
  e.grader = field(j, "grader").get<GraderIdentity>();
  e.parsed = field(j, "parsed").get<ParsedEvaluation>();
  e.status = get_enum<EvaluationStatus>(j, "status");
  e.created_at = get_time_or(j, "created_at");
  e.prompt_digest = get_string_or(j, "prompt_digest", "");
  e.raw_response = get_string_or(j, "raw_response", "");
}

void to_json(Json& j, const GradingFailure& f) {
  j = Json{{"id", f.id},
           {"submission_id", f.submission_id},
           {"question_id", f.question_id},
           {"grader", f.grader},
           {"reason", f.reason},
           {"at", format_timestamp(f.at)}};
}

void from_json(const Json& j, GradingFailure& f) {
  f.id = get_string(j, "id");
  f.submission_id = get_string(j, "submission_id");
  f.question_id = get_string(j, "question_id");
  f.grader = field(j, "grader").get<GraderIdentity>();
  f.reason = get_string_or(j, "reason", "");
  f.at = get_time_or(j, "at");
}

void to_json(Json& j, const Resolution& r) {
  Json adjusted = Json::object();
  for (const auto& [c, p] : r.adjusted_per_criterion) adjusted[c] = p;
  j = Json{{"appeal_id", r.appeal_id},
           {"decision", name(r.decision)},
           {"adjusted_per_criterion", adjusted},
           {"explanation", r.explanation},
           {"proposed_by", r.proposed_by},
           {"confirmed_by", r.confirmed_by},
           {"original_total", r.original_total},
           {"new_total", r.new_total},
           {"overridden", r.overridden}};
}

void from_json(const Json& j, Resolution& r) {
  r.appeal_id = get_string(j, "appeal_id");
  r.decision = get_enum<AppealDecision>(j, "decision");
  r.adjusted_per_criterion.clear();
  if (j.contains("adjusted_per_criterion")) {
    for (const auto& [c, p] : j.at("adjusted_per_criterion").items()) r.adjusted_per_criterion[c] = p.get<Decimal>();
  }
  r.explanation = get_string_or(j, "explanation", "");
  r.proposed_by = field(j, "proposed_by").get<GraderIdentity>();
  r.confirmed_by = get_string_or(j, "confirmed_by", "");
  r.original_total = get_decimal(j, "original_total");
  r.new_total = get_decimal(j, "new_total");
  r.overridden = j.value("overridden", false);
}

void to_json(Json& j, const Appeal& a) {
  j = Json{{"id", a.id},
           {"evaluation_id", a.evaluation_id},
           {"student_id", a.student_id},
           {"argument", a.argument},
           {"state", name(a.state)},
           {"created_at", format_timestamp(a.created_at)},
           {"needs_manual", a.needs_manual}};
  if (!a.manual_reason.empty()) j["manual_reason"] = a.manual_reason;
  if (a.proposal) j["proposal"] = *a.proposal;
}

void from_json(const Json& j, Appeal& a) {
  a.id = get_string(j, "id");
  a.evaluation_id = get_string(j, "evaluation_id");
  a.student_id = get_string(j, "student_id");
  a.argument = get_string(j, "argument");
  a.state = get_enum<AppealState>(j, "state");
  a.created_at = get_time_or(j, "created_at");
  a.needs_manual = j.value("needs_manual", false);
  a.manual_reason = get_string_or(j, "manual_reason", "");
  a.proposal.reset();
  if (j.contains("proposal") && !j.at("proposal").is_null()) a.proposal = j.at("proposal").get<Resolution>();
}

void to_json(Json& j, const GradeAdjustment& a) {
  j = Json{{"id", a.id},
           {"evaluation_id", a.evaluation_id},
           {"student_id", a.student_id},
           {"appeal_id", a.appeal_id},
           {"delta", a.delta},
           {"at", format_timestamp(a.at)}};
}

void from_json(const Json& j, GradeAdjustment& a) {
  a.id = get_string(j, "id");
  a.evaluation_id = get_string(j, "evaluation_id");
  a.student_id = get_string(j, "student_id");
  a.appeal_id = get_string(j, "appeal_id");
  a.delta = get_decimal(j, "delta");
  a.at = get_time_or(j, "at");
}

void to_json(Json& j, const PasswordLedgerEntry& e) {
  j = Json{{"student_id", e.student_id},
           {"exam_id", e.exam_id},
           {"archive_path", e.archive_path},
           {"password", e.password},
           {"created_at", format_timestamp(e.created_at)},
           {"delivered", e.delivered}};
}

void from_json(const Json& j, PasswordLedgerEntry& e) {
  e.student_id = get_string(j, "student_id");
  e.exam_id = get_string_or(j, "exam_id", "");
  e.archive_path = get_string(j, "archive_path");
  e.password = get_string(j, "password");
  e.created_at = get_time_or(j, "created_at");
  e.delivered = j.value("delivered", false);
}

void to_json(Json& j, const AuditEvent& e) {
  j = Json{{"seq", e.seq},
           {"actor", e.actor},
           {"action", name(e.action)},
           {"subject", e.subject},
           {"payload_digest", e.payload_digest},
           {"at", format_timestamp(e.at)}};
  if (!e.detail.empty()) j["detail"] = e.detail;
}

void from_json(const Json& j, AuditEvent& e) {
  e.seq = field(j, "seq").get<std::int64_t>();
  e.actor = get_string(j, "actor");
  e.action = get_enum<AuditAction>(j, "action");
  e.subject = get_string_or(j, "subject", "");
  e.payload_digest = get_string_or(j, "payload_digest", "");
  e.detail = get_string_or(j, "detail", "");
  e.at = get_time_or(j, "at");
}

ExamDocument parse_exam_document(const Json& doc) {
  ExamDocument out;
  out.exam = field(doc, "exam").get<Exam>();
  out.rubrics = get_list<Rubric>(doc, "rubrics");
  return out;
}

Json to_exam_document(const ExamDocument& doc) { return Json{{"exam", doc.exam}, {"rubrics", doc.rubrics}}; }

}  // namespace aipat
