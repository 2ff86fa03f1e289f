#pragma once

#include <cstdio>
#include <filesystem>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "aipat/json_io.hpp"
#include "aipat/model.hpp"
#include "aipat/time.hpp"

namespace aipat::store {

/// Who did what to which record; becomes exactly one AuditEvent.
struct AuditNote {
  std::string actor;
  AuditAction action = AuditAction::exam_registered;
  std::string subject;
  std::string detail;
};

struct EvaluationFilter {
  std::string exam_id;
  std::string submission_id;
  std::string question_id;
  std::string grader_label;
};

/// Single-node record store.
///
/// Every mutating call is one transaction: its record changes and its audit
/// event are written as a single journal line (fsync'd when file-backed)
/// before the in-memory state changes. Opening a data directory replays the
/// journal. Reads return copies taken under a shared lock.
class RecordStore {
 public:
  static std::unique_ptr<RecordStore> open(const std::filesystem::path& data_dir, Clock& clock = system_clock());
  static std::unique_ptr<RecordStore> in_memory(Clock& clock = system_clock());
  ~RecordStore();

  RecordStore(const RecordStore&) = delete;
  RecordStore& operator=(const RecordStore&) = delete;

  Clock& clock() const { return clock_; }
  const std::optional<std::filesystem::path>& data_dir() const { return dir_; }
  std::filesystem::path blob_dir() const;

  // -- exams and rubrics ---------------------------------------------------
  /// Validates the exam and every rubric against its question. Each question
  /// needs exactly one rubric. Re-registering an existing id is a conflict.
  void register_exam(const ExamDocument& doc, const AuditNote& note);
  std::optional<Exam> exam(const std::string& id) const;
  std::vector<Exam> exams() const;
  std::optional<Rubric> rubric(const std::string& exam_id, const std::string& question_id) const;

  // -- submissions ---------------------------------------------------------
  /// Insert or replace; the exam must exist and every answer key must name
  /// one of its questions. Integrity status may not change through upsert.
  void upsert_submission(const Submission& submission, const AuditNote& note);
  /// Compare-and-set style update under the write lock. Status changes must
  /// follow the integrity transition table, and `penalized` is only
  /// reachable with a penalty_confirmed note carrying a human actor.
  Submission update_submission(const std::string& id, const std::function<void(Submission&)>& mutate,
                               const AuditNote& note);
  std::optional<Submission> submission(const std::string& id) const;
  std::vector<Submission> submissions(const std::string& exam_id = "") const;

  // -- evaluations ---------------------------------------------------------
  /// Returns false (and writes nothing) when an evaluation with this id
  /// already exists. Clears a recorded failure for the same cell.
  bool insert_evaluation(const Evaluation& evaluation, const AuditNote& note);
  void purge_evaluation(const std::string& id, const AuditNote& note);
  std::optional<Evaluation> evaluation(const std::string& id) const;
  std::vector<Evaluation> evaluations(const EvaluationFilter& filter = {}) const;

  void record_failure(const GradingFailure& failure, const AuditNote& note);
  std::optional<GradingFailure> failure(const std::string& id) const;
  std::vector<GradingFailure> failures(const std::string& exam_id = "") const;

  // -- appeals -------------------------------------------------------------
  /// Assigns the id, enforces the per-evaluation appeal limit (conflict).
  Appeal create_appeal(Appeal appeal, int max_per_evaluation, const AuditNote& note);
  /// Fails with ErrorKind::state unless the appeal is in one of `expected`.
  /// A state change made by `mutate` must be a declared transition.
  Appeal update_appeal(const std::string& id, std::initializer_list<AppealState> expected,
                       const std::function<void(Appeal&)>& mutate, const AuditNote& note);
  /// proposed -> resolved_*: stores the Resolution and the ledger entry in
  /// the same transaction.
  Appeal finalize_appeal(const std::string& id, const Resolution& resolution, const GradeAdjustment& adjustment,
                         AppealState target, const AuditNote& note);
  std::optional<Appeal> appeal(const std::string& id) const;
  std::vector<Appeal> appeals(std::optional<AppealState> state = std::nullopt) const;
  std::optional<Resolution> resolution(const std::string& appeal_id) const;
  std::vector<Resolution> resolutions() const;
  std::vector<GradeAdjustment> adjustments(const std::string& evaluation_id = "") const;

  /// Evaluation total plus every ledger delta recorded against it.
  Decimal effective_total(const std::string& evaluation_id) const;

  // -- distribution ledger -------------------------------------------------
  void record_ledger_entry(const PasswordLedgerEntry& entry, const AuditNote& note);
  std::optional<PasswordLedgerEntry> ledger_entry(const std::string& exam_id, const std::string& student_id) const;
  std::vector<PasswordLedgerEntry> ledger(const std::string& exam_id) const;

  // -- audit ---------------------------------------------------------------
  /// Appends a standalone event. `event.seq` must be 0 (assigned here);
  /// naming an existing seq is rejected as an attempt to rewrite history.
  std::int64_t append_audit(AuditEvent event);
  std::int64_t append_audit(const AuditNote& note);
  std::vector<AuditEvent> audit_events() const;
  std::size_t audit_count() const;

  /// Referential-integrity violations (empty when consistent).
  std::vector<std::string> check_integrity() const;

  /// Test hook: when the predicate returns true for a collection name the
  /// next journal write fails with ErrorKind::io.
  void set_write_fault(std::function<bool(std::string_view collection)> fault);

 private:
  RecordStore(std::optional<std::filesystem::path> dir, Clock& clock);

  struct Op {
    std::string collection;
    std::string key;
    std::optional<Json> record;  // nullopt = delete
  };

  void load();
  // Writes the transaction durably then applies it. Caller holds mu_ exclusively.
  std::int64_t commit(std::vector<Op> ops, const AuditNote& note);
  void apply(const Op& op);
  AuditEvent make_event(const AuditNote& note, const std::vector<Op>& ops) const;
  void check_evaluation_refs(const Evaluation& e) const;

  std::optional<std::filesystem::path> dir_;
  Clock& clock_;
  std::FILE* journal_ = nullptr;

  mutable std::shared_mutex mu_;
  std::map<std::string, ExamDocument> exams_;
  std::map<std::string, Submission> submissions_;
  std::map<std::string, Evaluation> evaluations_;
  std::map<std::string, GradingFailure> failures_;
  std::map<std::string, Appeal> appeals_;
  std::map<std::string, Resolution> resolutions_;
  std::map<std::string, GradeAdjustment> adjustments_;
  std::map<std::string, PasswordLedgerEntry> ledger_;
  std::vector<AuditEvent> audit_;
  std::int64_t next_appeal_number_ = 1;
  std::function<bool(std::string_view)> write_fault_;
};

}  // namespace aipat::store
