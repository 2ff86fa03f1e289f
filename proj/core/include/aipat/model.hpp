#pragma once

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "aipat/decimal.hpp"
#include "aipat/enum_names.hpp"
#include "aipat/time.hpp"

// Canonical record types shared by every module. Operations live in the
// per-module headers; this header only defines data.
namespace aipat {

// ---------------------------------------------------------------------------
// Exams and rubrics

enum class LanguageContext { cpp, java, either };
enum class ExamKind { quiz, midterm, final };

struct Question {
  std::string id;
  std::string exam_id;
  std::string text;
  LanguageContext language_context = LanguageContext::either;
  Decimal max_points;
};

struct RubricCriterion {
  std::string id;
  std::string title;
  Decimal max_points;
  std::string full_descriptor;
  std::string partial_descriptor;
  std::string none_descriptor;
};

struct CommonMistake {
  std::string description;
  Decimal suggested_penalty;
};

struct Rubric {
  std::string question_id;
  std::vector<RubricCriterion> criteria;
  std::vector<CommonMistake> common_mistakes;

  const RubricCriterion* find(const std::string& criterion_id) const;
};

struct Exam {
  std::string id;
  ExamKind kind = ExamKind::quiz;
  std::vector<Question> questions;
  Decimal max_total;
  // Empty means the default teaching-assistant role prompt.
  std::string system_prompt;

  const Question* find(const std::string& question_id) const;
};

// ---------------------------------------------------------------------------
// Submissions and integrity verification

enum class IntegrityStatus { unverified, verified, flagged, penalized };

/// unverified -> {verified, flagged}; flagged -> {verified, penalized}.
bool integrity_transition_allowed(IntegrityStatus from, IntegrityStatus to);

enum class Verdict { match, mismatch, unreadable };
enum class Severity { cosmetic, semantic };
enum class IntegrityAction { accept, flag_for_review, penalize_pending_confirmation };

struct Discrepancy {
  std::string question_id;
  std::string handwritten_excerpt;
  std::string typed_excerpt;
  Severity severity = Severity::cosmetic;
};

struct VerificationVerdict {
  Verdict verdict = Verdict::match;
  std::vector<Discrepancy> discrepancies;
  double confidence = 1.0;
};

struct IntegrityFinding {
  std::string question_id;
  VerificationVerdict verdict;
  IntegrityAction action = IntegrityAction::accept;
};

struct Answer {
  std::string scan_ref;
  std::string transcription;
};

struct Submission {
  std::string id;
  std::string student_id;
  std::string exam_id;
  std::map<std::string, Answer> answers;  // keyed by question id
  Timestamp received_at{};
  IntegrityStatus integrity_status = IntegrityStatus::unverified;
  std::vector<IntegrityFinding> findings;
  // question id -> fraction of that question's points withheld. Pending
  // entries become confirmed only through a human confirmation event.
  std::map<std::string, Decimal> pending_penalties;
  std::map<std::string, Decimal> confirmed_penalties;
  // Set when automated verification could not produce a verdict.
  bool manual_verification = false;
};

// ---------------------------------------------------------------------------
// Grading

enum class GraderKind { model, human };

struct GraderIdentity {
  GraderKind kind = GraderKind::model;
  std::string label;
  Decimal temperature;       // models only
  int run_index = 1;         // models only
  int session_index = 1;     // humans only
  std::string provider_id;   // models only

  /// Unique key of one grading pass: (label, temperature, run) for models,
  /// (label, session) for humans.
  std::string key() const;
  int pass_index() const { return kind == GraderKind::model ? run_index : session_index; }

  friend bool operator==(const GraderIdentity& a, const GraderIdentity& b) { return a.key() == b.key(); }
};

enum class Tier { full, partial, none };

struct CriterionScore {
  std::string criterion_id;
  Tier tier = Tier::none;
  Decimal points;
  std::string justification;

  friend bool operator==(const CriterionScore&, const CriterionScore&) = default;
};

struct ParsedEvaluation {
  std::vector<CriterionScore> per_criterion;
  std::string overall_feedback;
  Decimal total;

  friend bool operator==(const ParsedEvaluation&, const ParsedEvaluation&) = default;
};

enum class EvaluationStatus { valid, manual_review };

struct Evaluation {
  std::string id;
  std::string submission_id;
  std::string question_id;
  GraderIdentity grader;
  ParsedEvaluation parsed;
  EvaluationStatus status = EvaluationStatus::valid;
  Timestamp created_at{};
  std::string prompt_digest;
  std::string raw_response;  // kept for manual review
};

/// A grading cell that could not produce an Evaluation.
struct GradingFailure {
  std::string id;  // same cell key an Evaluation would use
  std::string submission_id;
  std::string question_id;
  GraderIdentity grader;
  std::string reason;
  Timestamp at{};
};

// ---------------------------------------------------------------------------
// Appeals

enum class AppealState { submitted, under_review, proposed, resolved_changed, resolved_unchanged, published };

/// submitted -> under_review -> proposed -> {resolved_changed, resolved_unchanged} -> published.
bool appeal_transition_allowed(AppealState from, AppealState to);

enum class AppealDecision { adjust, uphold };
enum class ReviewerAction { accept, override_, reject_to_manual };

struct Resolution {
  std::string appeal_id;
  AppealDecision decision = AppealDecision::uphold;
  std::map<std::string, Decimal> adjusted_per_criterion;  // adjust only
  std::string explanation;
  GraderIdentity proposed_by;
  std::string confirmed_by;
  Decimal original_total;
  Decimal new_total;
  bool overridden = false;
};

struct Appeal {
  std::string id;
  std::string evaluation_id;
  std::string student_id;
  std::string argument;
  AppealState state = AppealState::submitted;
  Timestamp created_at{};
  bool needs_manual = false;
  std::string manual_reason;
  std::optional<Resolution> proposal;  // set while proposed
};

/// Append-only grade ledger entry produced by a finalized appeal.
struct GradeAdjustment {
  std::string id;
  std::string evaluation_id;
  std::string student_id;
  std::string appeal_id;
  Decimal delta;
  Timestamp at{};
};

// ---------------------------------------------------------------------------
// Distribution

struct PasswordLedgerEntry {
  std::string student_id;
  std::string exam_id;
  std::string archive_path;
  std::string password;
  Timestamp created_at{};
  bool delivered = false;
};

// ---------------------------------------------------------------------------
// Audit

enum class AuditAction {
  exam_registered,
  rubric_registered,
  submission_ingested,
  verification_recorded,
  verification_unavailable,
  integrity_flag_cleared,
  penalty_confirmed,
  evaluation_recorded,
  grading_failure_recorded,
  evaluation_purged,
  appeal_submitted,
  appeal_review_started,
  appeal_proposed,
  appeal_flagged_manual,
  appeal_resolved,
  appeal_published,
  distribution_entry_recorded,
};

struct AuditEvent {
  std::int64_t seq = 0;
  std::string actor;
  AuditAction action = AuditAction::exam_registered;
  std::string subject;
  std::string payload_digest;
  std::string detail;
  Timestamp at{};
};

}  // namespace aipat

AIPAT_ENUM_NAMES(aipat::LanguageContext, {aipat::LanguageContext::cpp, "cpp"},
                 {aipat::LanguageContext::java, "java"}, {aipat::LanguageContext::either, "either"});
AIPAT_ENUM_NAMES(aipat::ExamKind, {aipat::ExamKind::quiz, "quiz"}, {aipat::ExamKind::midterm, "midterm"},
                 {aipat::ExamKind::final, "final"});
AIPAT_ENUM_NAMES(aipat::IntegrityStatus, {aipat::IntegrityStatus::unverified, "unverified"},
                 {aipat::IntegrityStatus::verified, "verified"}, {aipat::IntegrityStatus::flagged, "flagged"},
                 {aipat::IntegrityStatus::penalized, "penalized"});
AIPAT_ENUM_NAMES(aipat::Verdict, {aipat::Verdict::match, "match"}, {aipat::Verdict::mismatch, "mismatch"},
                 {aipat::Verdict::unreadable, "unreadable"});
AIPAT_ENUM_NAMES(aipat::Severity, {aipat::Severity::cosmetic, "cosmetic"}, {aipat::Severity::semantic, "semantic"});
AIPAT_ENUM_NAMES(aipat::IntegrityAction, {aipat::IntegrityAction::accept, "accept"},
                 {aipat::IntegrityAction::flag_for_review, "flag_for_review"},
                 {aipat::IntegrityAction::penalize_pending_confirmation, "penalize_pending_confirmation"});
AIPAT_ENUM_NAMES(aipat::GraderKind, {aipat::GraderKind::model, "model"}, {aipat::GraderKind::human, "human"});
AIPAT_ENUM_NAMES(aipat::Tier, {aipat::Tier::full, "full"}, {aipat::Tier::partial, "partial"},
                 {aipat::Tier::none, "none"});
AIPAT_ENUM_NAMES(aipat::EvaluationStatus, {aipat::EvaluationStatus::valid, "valid"},
                 {aipat::EvaluationStatus::manual_review, "manual_review"});
AIPAT_ENUM_NAMES(aipat::AppealState, {aipat::AppealState::submitted, "submitted"},
                 {aipat::AppealState::under_review, "under_review"}, {aipat::AppealState::proposed, "proposed"},
                 {aipat::AppealState::resolved_changed, "resolved_changed"},
                 {aipat::AppealState::resolved_unchanged, "resolved_unchanged"},
                 {aipat::AppealState::published, "published"});
AIPAT_ENUM_NAMES(aipat::AppealDecision, {aipat::AppealDecision::adjust, "adjust"},
                 {aipat::AppealDecision::uphold, "uphold"});
AIPAT_ENUM_NAMES(aipat::ReviewerAction, {aipat::ReviewerAction::accept, "accept"},
                 {aipat::ReviewerAction::override_, "override"},
                 {aipat::ReviewerAction::reject_to_manual, "reject_to_manual"});
AIPAT_ENUM_NAMES(aipat::AuditAction, {aipat::AuditAction::exam_registered, "exam_registered"},
                 {aipat::AuditAction::rubric_registered, "rubric_registered"},
                 {aipat::AuditAction::submission_ingested, "submission_ingested"},
                 {aipat::AuditAction::verification_recorded, "verification_recorded"},
                 {aipat::AuditAction::verification_unavailable, "verification_unavailable"},
                 {aipat::AuditAction::integrity_flag_cleared, "integrity_flag_cleared"},
                 {aipat::AuditAction::penalty_confirmed, "penalty_confirmed"},
                 {aipat::AuditAction::evaluation_recorded, "evaluation_recorded"},
                 {aipat::AuditAction::grading_failure_recorded, "grading_failure_recorded"},
                 {aipat::AuditAction::evaluation_purged, "evaluation_purged"},
                 {aipat::AuditAction::appeal_submitted, "appeal_submitted"},
                 {aipat::AuditAction::appeal_review_started, "appeal_review_started"},
                 {aipat::AuditAction::appeal_proposed, "appeal_proposed"},
                 {aipat::AuditAction::appeal_flagged_manual, "appeal_flagged_manual"},
                 {aipat::AuditAction::appeal_resolved, "appeal_resolved"},
                 {aipat::AuditAction::appeal_published, "appeal_published"},
                 {aipat::AuditAction::distribution_entry_recorded, "distribution_entry_recorded"});
