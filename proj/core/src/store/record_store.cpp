#include "aipat/store/record_store.hpp"

#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <mutex>
#include <set>

#include "aipat/digest.hpp"
#include "aipat/error.hpp"
#include "aipat/rubric.hpp"

namespace aipat::store {

namespace {

constexpr const char* kExams = "exams";
constexpr const char* kSubmissions = "submissions";
constexpr const char* kEvaluations = "evaluations";
constexpr const char* kFailures = "failures";
constexpr const char* kAppeals = "appeals";
constexpr const char* kResolutions = "resolutions";
constexpr const char* kAdjustments = "adjustments";
constexpr const char* kLedger = "ledger";
constexpr const char* kAudit = "audit";

std::string dump(const Json& j) { return j.dump(-1, ' ', false, Json::error_handler_t::replace); }

std::string ledger_key(const std::string& exam_id, const std::string& student_id) { return exam_id + "/" + student_id; }

bool is_resolved(AppealState s) { return s == AppealState::resolved_changed || s == AppealState::resolved_unchanged; }

template <typename Map>
auto find_copy(const Map& m, const std::string& key) -> std::optional<typename Map::mapped_type> {
  auto it = m.find(key);
  if (it == m.end()) return std::nullopt;
  return it->second;
}

}  // namespace

RecordStore::RecordStore(std::optional<std::filesystem::path> dir, Clock& clock) : dir_(std::move(dir)), clock_(clock) {}

RecordStore::~RecordStore() {
  if (journal_ != nullptr) std::fclose(journal_);
}

std::unique_ptr<RecordStore> RecordStore::open(const std::filesystem::path& data_dir, Clock& clock) {
  std::error_code ec;
  std::filesystem::create_directories(data_dir / "blobs", ec);
  if (ec) fail(ErrorKind::io, "cannot create data directory " + data_dir.string() + ": " + ec.message());
  std::unique_ptr<RecordStore> store(new RecordStore(data_dir, clock));
  store->load();
  const auto path = data_dir / "journal.jsonl";
  store->journal_ = std::fopen(path.c_str(), "ab");
  if (store->journal_ == nullptr) fail(ErrorKind::io, "cannot open journal " + path.string());
  return store;
}

std::unique_ptr<RecordStore> RecordStore::in_memory(Clock& clock) {
  return std::unique_ptr<RecordStore>(new RecordStore(std::nullopt, clock));
}

std::filesystem::path RecordStore::blob_dir() const { return dir_ ? *dir_ / "blobs" : std::filesystem::path{}; }

void RecordStore::load() {
  const auto path = *dir_ / "journal.jsonl";
  std::ifstream in(path, std::ios::binary);
  if (!in) return;
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < content.size()) {
    const auto nl = content.find('\n', pos);
    ++line_no;
    if (nl == std::string::npos) break;  // torn final write: never acknowledged, drop it
    const std::string line = content.substr(pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    const Json tx = Json::parse(line, nullptr, false);
    if (tx.is_discarded() || !tx.is_object()) {
      fail(ErrorKind::integrity, "corrupt journal line " + std::to_string(line_no) + " in " + path.string());
    }
    for (const auto& op : tx.at("ops")) {
      Op o{op.at("c").get<std::string>(), op.at("k").get<std::string>(), std::nullopt};
      if (op.contains("put")) o.record = op.at("put");
      apply(o);
    }
    auto event = tx.at("audit").get<AuditEvent>();
    if (!audit_.empty() && event.seq <= audit_.back().seq) {
      fail(ErrorKind::integrity, "audit sequence regresses at journal line " + std::to_string(line_no));
    }
    audit_.push_back(std::move(event));
  }
}

void RecordStore::apply(const Op& op) {
  auto put_or_erase = [&](auto& map, auto decode) {
    if (op.record) {
      map[op.key] = decode(*op.record);
    } else {
      map.erase(op.key);
    }
  };
  const std::string& c = op.collection;
  if (c == kExams) {
    put_or_erase(exams_, [](const Json& j) { return parse_exam_document(j); });
  } else if (c == kSubmissions) {
    put_or_erase(submissions_, [](const Json& j) { return j.get<Submission>(); });
  } else if (c == kEvaluations) {
    put_or_erase(evaluations_, [](const Json& j) { return j.get<Evaluation>(); });
  } else if (c == kFailures) {
    put_or_erase(failures_, [](const Json& j) { return j.get<GradingFailure>(); });
  } else if (c == kAppeals) {
    put_or_erase(appeals_, [](const Json& j) { return j.get<Appeal>(); });
    if (op.key.rfind("ap-", 0) == 0) {
      try {
        next_appeal_number_ = std::max<std::int64_t>(next_appeal_number_, std::stoll(op.key.substr(3)) + 1);
      } catch (const std::exception&) {
      }
    }
  } else if (c == kResolutions) {
    put_or_erase(resolutions_, [](const Json& j) { return j.get<Resolution>(); });
  } else if (c == kAdjustments) {
    put_or_erase(adjustments_, [](const Json& j) { return j.get<GradeAdjustment>(); });
  } else if (c == kLedger) {
    put_or_erase(ledger_, [](const Json& j) { return j.get<PasswordLedgerEntry>(); });
  } else {
    fail(ErrorKind::integrity, "unknown collection '" + c + "'");
  }
}

AuditEvent RecordStore::make_event(const AuditNote& note, const std::vector<Op>& ops) const {
  if (note.actor.empty()) fail(ErrorKind::validation, "audit events need an actor");
  AuditEvent e;
  e.seq = audit_.empty() ? 1 : audit_.back().seq + 1;
  e.actor = note.actor;
  e.action = note.action;
  e.subject = note.subject;
  e.detail = note.detail;
  e.at = clock_.now();
  FieldHasher h;
  for (const auto& op : ops) h.add(op.collection).add(op.key).add(op.record ? dump(*op.record) : "<deleted>");
  h.add(note.detail);
  e.payload_digest = h.hex();
  return e;
}

std::int64_t RecordStore::commit(std::vector<Op> ops, const AuditNote& note) {
  if (write_fault_) {
    if (ops.empty() && write_fault_(kAudit)) fail(ErrorKind::io, "injected write failure on audit");
    for (const auto& op : ops) {
      if (write_fault_(op.collection)) fail(ErrorKind::io, "injected write failure on " + op.collection);
    }
  }
  AuditEvent event = make_event(note, ops);
  if (journal_ != nullptr) {
    Json tx_ops = Json::array();
    for (const auto& op : ops) {
      Json o{{"c", op.collection}, {"k", op.key}};
      if (op.record) o["put"] = *op.record;
      tx_ops.push_back(std::move(o));
    }
    const std::string line = dump(Json{{"ops", tx_ops}, {"audit", event}}) + "\n";
    if (std::fwrite(line.data(), 1, line.size(), journal_) != line.size() || std::fflush(journal_) != 0 ||
        ::fsync(::fileno(journal_)) != 0) {
      fail(ErrorKind::io, "journal write failed");
    }
  }
  for (const auto& op : ops) apply(op);
  audit_.push_back(event);
  return event.seq;
}

void RecordStore::set_write_fault(std::function<bool(std::string_view)> fault) {
  std::unique_lock lock(mu_);
  write_fault_ = std::move(fault);
}

// -- exams -------------------------------------------------------------------

void RecordStore::register_exam(const ExamDocument& doc, const AuditNote& note) {
  if (doc.exam.id.empty()) fail(ErrorKind::validation, "exam id must be non-empty");
  if (auto v = validate_exam(doc.exam); !v.ok()) fail(ErrorKind::validation, "exam '" + doc.exam.id + "': " + v.summary());
  std::set<std::string> covered;
  for (const auto& rubric : doc.rubrics) {
    const Question* q = doc.exam.find(rubric.question_id);
    if (q == nullptr) fail(ErrorKind::validation, "rubric for unknown question '" + rubric.question_id + "'");
    if (!covered.insert(rubric.question_id).second) {
      fail(ErrorKind::validation, "two rubrics for question '" + rubric.question_id + "'");
    }
    if (auto v = validate_rubric(rubric, *q); !v.ok()) {
      fail(ErrorKind::validation, "rubric for '" + q->id + "': " + v.summary());
    }
  }
  for (const auto& q : doc.exam.questions) {
    if (covered.count(q.id) == 0) fail(ErrorKind::validation, "question '" + q.id + "' has no rubric");
  }
  std::unique_lock lock(mu_);
  if (exams_.count(doc.exam.id) != 0) fail(ErrorKind::conflict, "exam '" + doc.exam.id + "' already registered");
  commit({{kExams, doc.exam.id, to_exam_document(doc)}}, note);
}

std::optional<Exam> RecordStore::exam(const std::string& id) const {
  std::shared_lock lock(mu_);
  auto it = exams_.find(id);
  if (it == exams_.end()) return std::nullopt;
  return it->second.exam;
}

std::vector<Exam> RecordStore::exams() const {
  std::shared_lock lock(mu_);
  std::vector<Exam> out;
  for (const auto& [id, doc] : exams_) out.push_back(doc.exam);
  return out;
}

std::optional<Rubric> RecordStore::rubric(const std::string& exam_id, const std::string& question_id) const {
  std::shared_lock lock(mu_);
  auto it = exams_.find(exam_id);
  if (it == exams_.end()) return std::nullopt;
  for (const auto& r : it->second.rubrics) {
    if (r.question_id == question_id) return r;
  }
  return std::nullopt;
}

// -- submissions ---------------------------------------------------------------

void RecordStore::upsert_submission(const Submission& s, const AuditNote& note) {
  if (s.id.empty() || s.student_id.empty()) fail(ErrorKind::validation, "submission needs id and student_id");
  std::unique_lock lock(mu_);
  auto exam_it = exams_.find(s.exam_id);
  if (exam_it == exams_.end()) fail(ErrorKind::not_found, "unknown exam '" + s.exam_id + "'");
  for (const auto& [qid, answer] : s.answers) {
    if (exam_it->second.exam.find(qid) == nullptr) {
      fail(ErrorKind::validation, "answer for unknown question '" + qid + "'");
    }
  }
  if (auto it = submissions_.find(s.id); it != submissions_.end()) {
    if (it->second.integrity_status != s.integrity_status) {
      fail(ErrorKind::state, "integrity status changes must go through verification");
    }
    if (it->second.student_id != s.student_id || it->second.exam_id != s.exam_id) {
      fail(ErrorKind::conflict, "submission '" + s.id + "' belongs to another student or exam");
    }
  } else if (s.integrity_status != IntegrityStatus::unverified) {
    fail(ErrorKind::state, "new submissions start unverified");
  }
  commit({{kSubmissions, s.id, Json(s)}}, note);
}

Submission RecordStore::update_submission(const std::string& id, const std::function<void(Submission&)>& mutate,
                                          const AuditNote& note) {
  std::unique_lock lock(mu_);
  auto it = submissions_.find(id);
  if (it == submissions_.end()) fail(ErrorKind::not_found, "unknown submission '" + id + "'");
  Submission updated = it->second;
  mutate(updated);
  if (updated.id != id || updated.student_id != it->second.student_id || updated.exam_id != it->second.exam_id) {
    fail(ErrorKind::validation, "submission identity fields are immutable");
  }
  const auto from = it->second.integrity_status;
  const auto to = updated.integrity_status;
  if (from != to && !integrity_transition_allowed(from, to)) {
    fail(ErrorKind::state, "integrity status cannot move from " + std::string(enum_name(from)) + " to " +
                               std::string(enum_name(to)));
  }
  if (to == IntegrityStatus::penalized && from != to && note.action != AuditAction::penalty_confirmed) {
    fail(ErrorKind::state, "a penalty requires a recorded human confirmation");
  }
  commit({{kSubmissions, id, Json(updated)}}, note);
  return updated;
}

std::optional<Submission> RecordStore::submission(const std::string& id) const {
  std::shared_lock lock(mu_);
  return find_copy(submissions_, id);
}

std::vector<Submission> RecordStore::submissions(const std::string& exam_id) const {
  std::shared_lock lock(mu_);
  std::vector<Submission> out;
  for (const auto& [id, s] : submissions_) {
    if (exam_id.empty() || s.exam_id == exam_id) out.push_back(s);
  }
  return out;
}

// -- evaluations -----------------------------------------------------------------

void RecordStore::check_evaluation_refs(const Evaluation& e) const {
  auto sub = submissions_.find(e.submission_id);
  if (sub == submissions_.end()) fail(ErrorKind::integrity, "evaluation references unknown submission '" + e.submission_id + "'");
  auto exam = exams_.find(sub->second.exam_id);
  if (exam == exams_.end() || exam->second.exam.find(e.question_id) == nullptr) {
    fail(ErrorKind::integrity, "evaluation references unknown question '" + e.question_id + "'");
  }
}

bool RecordStore::insert_evaluation(const Evaluation& e, const AuditNote& note) {
  std::unique_lock lock(mu_);
  if (evaluations_.count(e.id) != 0) return false;
  check_evaluation_refs(e);
  std::vector<Op> ops{{kEvaluations, e.id, Json(e)}};
  if (failures_.count(e.id) != 0) ops.push_back({kFailures, e.id, std::nullopt});
  commit(std::move(ops), note);
  return true;
}

void RecordStore::purge_evaluation(const std::string& id, const AuditNote& note) {
  std::unique_lock lock(mu_);
  if (evaluations_.count(id) == 0) fail(ErrorKind::not_found, "unknown evaluation '" + id + "'");
  commit({{kEvaluations, id, std::nullopt}}, note);
}

std::optional<Evaluation> RecordStore::evaluation(const std::string& id) const {
  std::shared_lock lock(mu_);
  return find_copy(evaluations_, id);
}

std::vector<Evaluation> RecordStore::evaluations(const EvaluationFilter& f) const {
  std::shared_lock lock(mu_);
  std::vector<Evaluation> out;
  for (const auto& [id, e] : evaluations_) {
    if (!f.submission_id.empty() && e.submission_id != f.submission_id) continue;
    if (!f.question_id.empty() && e.question_id != f.question_id) continue;
    if (!f.grader_label.empty() && e.grader.label != f.grader_label) continue;
    if (!f.exam_id.empty()) {
      auto sub = submissions_.find(e.submission_id);
      if (sub == submissions_.end() || sub->second.exam_id != f.exam_id) continue;
    }
    out.push_back(e);
  }
  return out;
}

void RecordStore::record_failure(const GradingFailure& failure, const AuditNote& note) {
  std::unique_lock lock(mu_);
  if (evaluations_.count(failure.id) != 0) fail(ErrorKind::conflict, "cell already has an evaluation");
  commit({{kFailures, failure.id, Json(failure)}}, note);
}

std::optional<GradingFailure> RecordStore::failure(const std::string& id) const {
  std::shared_lock lock(mu_);
  return find_copy(failures_, id);
}

std::vector<GradingFailure> RecordStore::failures(const std::string& exam_id) const {
  std::shared_lock lock(mu_);
  std::vector<GradingFailure> out;
  for (const auto& [id, f] : failures_) {
    if (!exam_id.empty()) {
      auto sub = submissions_.find(f.submission_id);
      if (sub == submissions_.end() || sub->second.exam_id != exam_id) continue;
    }
    out.push_back(f);
  }
  return out;
}

// -- appeals ---------------------------------------------------------------------

Appeal RecordStore::create_appeal(Appeal appeal, int max_per_evaluation, const AuditNote& note) {
  std::unique_lock lock(mu_);
  if (evaluations_.count(appeal.evaluation_id) == 0) {
    fail(ErrorKind::not_found, "unknown evaluation '" + appeal.evaluation_id + "'");
  }
  int existing = 0;
  for (const auto& [id, a] : appeals_) {
    if (a.evaluation_id != appeal.evaluation_id) continue;
    if (a.state != AppealState::published && !is_resolved(a.state)) {
      fail(ErrorKind::conflict, "evaluation already has an open appeal (" + id + ")");
    }
    ++existing;
  }
  if (existing >= max_per_evaluation) {
    fail(ErrorKind::conflict, "appeal limit of " + std::to_string(max_per_evaluation) + " reached for this evaluation");
  }
  char id[32];
  std::snprintf(id, sizeof id, "ap-%06lld", static_cast<long long>(next_appeal_number_));
  appeal.id = id;
  appeal.state = AppealState::submitted;
  AuditNote n = note;
  if (n.subject.empty()) n.subject = appeal.id;
  commit({{kAppeals, appeal.id, Json(appeal)}}, n);
  return appeal;
}

Appeal RecordStore::update_appeal(const std::string& id, std::initializer_list<AppealState> expected,
                                  const std::function<void(Appeal&)>& mutate, const AuditNote& note) {
  std::unique_lock lock(mu_);
  auto it = appeals_.find(id);
  if (it == appeals_.end()) fail(ErrorKind::not_found, "unknown appeal '" + id + "'");
  const AppealState current = it->second.state;
  if (std::find(expected.begin(), expected.end(), current) == expected.end()) {
    fail(ErrorKind::state, "appeal '" + id + "' is " + std::string(enum_name(current)));
  }
  Appeal updated = it->second;
  mutate(updated);
  if (updated.id != id || updated.argument != it->second.argument || updated.evaluation_id != it->second.evaluation_id) {
    fail(ErrorKind::validation, "appeal identity and argument are immutable");
  }
  if (updated.state != current) {
    if (!appeal_transition_allowed(current, updated.state)) {
      fail(ErrorKind::state, "illegal appeal transition " + std::string(enum_name(current)) + " -> " +
                                 std::string(enum_name(updated.state)));
    }
    if (is_resolved(updated.state)) fail(ErrorKind::state, "resolution requires finalize_appeal");
  }
  commit({{kAppeals, id, Json(updated)}}, note);
  return updated;
}

Appeal RecordStore::finalize_appeal(const std::string& id, const Resolution& resolution,
                                    const GradeAdjustment& adjustment, AppealState target, const AuditNote& note) {
  std::unique_lock lock(mu_);
  auto it = appeals_.find(id);
  if (it == appeals_.end()) fail(ErrorKind::not_found, "unknown appeal '" + id + "'");
  if (it->second.state != AppealState::proposed) {
    fail(ErrorKind::state, "appeal '" + id + "' is " + std::string(enum_name(it->second.state)));
  }
  if (!is_resolved(target)) fail(ErrorKind::state, "finalize must target a resolved state");
  if (resolution.confirmed_by.empty()) fail(ErrorKind::validation, "resolution needs a human confirmer");
  if (resolutions_.count(id) != 0) fail(ErrorKind::conflict, "appeal '" + id + "' already has a resolution");
  if (resolution.appeal_id != id || adjustment.appeal_id != id) fail(ErrorKind::validation, "resolution/appeal mismatch");
  Appeal updated = it->second;
  updated.state = target;
  commit({{kResolutions, id, Json(resolution)}, {kAdjustments, adjustment.id, Json(adjustment)}, {kAppeals, id, Json(updated)}},
         note);
  return updated;
}

std::optional<Appeal> RecordStore::appeal(const std::string& id) const {
  std::shared_lock lock(mu_);
  return find_copy(appeals_, id);
}

std::vector<Appeal> RecordStore::appeals(std::optional<AppealState> state) const {
  std::shared_lock lock(mu_);
  std::vector<Appeal> out;
  for (const auto& [id, a] : appeals_) {
    if (!state || a.state == *state) out.push_back(a);
  }
  return out;
}

std::optional<Resolution> RecordStore::resolution(const std::string& appeal_id) const {
  std::shared_lock lock(mu_);
  return find_copy(resolutions_, appeal_id);
}

std::vector<Resolution> RecordStore::resolutions() const {
  std::shared_lock lock(mu_);
  std::vector<Resolution> out;
  for (const auto& [id, r] : resolutions_) out.push_back(r);
  return out;
}

std::vector<GradeAdjustment> RecordStore::adjustments(const std::string& evaluation_id) const {
  std::shared_lock lock(mu_);
  std::vector<GradeAdjustment> out;
  for (const auto& [id, a] : adjustments_) {
    if (evaluation_id.empty() || a.evaluation_id == evaluation_id) out.push_back(a);
  }
  return out;
}

Decimal RecordStore::effective_total(const std::string& evaluation_id) const {
  std::shared_lock lock(mu_);
  auto it = evaluations_.find(evaluation_id);
  if (it == evaluations_.end()) fail(ErrorKind::not_found, "unknown evaluation '" + evaluation_id + "'");
  Decimal total = it->second.parsed.total;
  for (const auto& [id, a] : adjustments_) {
    if (a.evaluation_id == evaluation_id) total += a.delta;
  }
  return total;
}

// -- ledger ----------------------------------------------------------------------

void RecordStore::record_ledger_entry(const PasswordLedgerEntry& entry, const AuditNote& note) {
  std::unique_lock lock(mu_);
  const std::string key = ledger_key(entry.exam_id, entry.student_id);
  for (const auto& [k, e] : ledger_) {
    if (k != key && e.exam_id == entry.exam_id && e.password == entry.password) {
      fail(ErrorKind::conflict, "password already issued in this distribution batch");
    }
  }
  // The password itself never enters the audit trail.
  commit({{kLedger, key, Json(entry)}}, note);
}

std::optional<PasswordLedgerEntry> RecordStore::ledger_entry(const std::string& exam_id,
                                                             const std::string& student_id) const {
  std::shared_lock lock(mu_);
  return find_copy(ledger_, ledger_key(exam_id, student_id));
}

std::vector<PasswordLedgerEntry> RecordStore::ledger(const std::string& exam_id) const {
  std::shared_lock lock(mu_);
  std::vector<PasswordLedgerEntry> out;
  for (const auto& [k, e] : ledger_) {
    if (e.exam_id == exam_id) out.push_back(e);
  }
  return out;
}

// -- audit -----------------------------------------------------------------------

std::int64_t RecordStore::append_audit(AuditEvent event) {
  std::unique_lock lock(mu_);
  const std::int64_t last = audit_.empty() ? 0 : audit_.back().seq;
  if (event.seq != 0) {
    if (event.seq <= last) fail(ErrorKind::conflict, "audit event " + std::to_string(event.seq) + " is immutable");
    fail(ErrorKind::validation, "audit sequence numbers are assigned by the store");
  }
  return commit({}, AuditNote{event.actor, event.action, event.subject, event.detail});
}

std::int64_t RecordStore::append_audit(const AuditNote& note) {
  std::unique_lock lock(mu_);
  return commit({}, note);
}

std::vector<AuditEvent> RecordStore::audit_events() const {
  std::shared_lock lock(mu_);
  return audit_;
}

std::size_t RecordStore::audit_count() const {
  std::shared_lock lock(mu_);
  return audit_.size();
}

std::vector<std::string> RecordStore::check_integrity() const {
  std::shared_lock lock(mu_);
  std::vector<std::string> problems;
  for (const auto& [id, e] : evaluations_) {
    auto sub = submissions_.find(e.submission_id);
    if (sub == submissions_.end()) {
      problems.push_back("evaluation " + id + " -> missing submission " + e.submission_id);
      continue;
    }
    auto exam = exams_.find(sub->second.exam_id);
    if (exam == exams_.end() || exam->second.exam.find(e.question_id) == nullptr) {
      problems.push_back("evaluation " + id + " -> missing question " + e.question_id);
    }
  }
  for (const auto& [id, r] : resolutions_) {
    if (appeals_.count(r.appeal_id) == 0) problems.push_back("resolution -> missing appeal " + r.appeal_id);
  }
  for (const auto& [id, a] : adjustments_) {
    if (appeals_.count(a.appeal_id) == 0) problems.push_back("adjustment " + id + " -> missing appeal " + a.appeal_id);
  }
  for (const auto& [id, a] : appeals_) {
    const bool needs_resolution = is_resolved(a.state) || a.state == AppealState::published;
    if (needs_resolution && resolutions_.count(id) == 0) problems.push_back("appeal " + id + " resolved without resolution");
  }
  for (const auto& [id, s] : submissions_) {
    if (exams_.count(s.exam_id) == 0) problems.push_back("submission " + id + " -> missing exam " + s.exam_id);
  }
  return problems;
}

}  // namespace aipat::store
