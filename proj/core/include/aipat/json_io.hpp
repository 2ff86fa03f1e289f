#pragma once

#include <nlohmann/json.hpp>

#include "aipat/decimal.hpp"
#include "aipat/model.hpp"
#include "aipat/time.hpp"

// JSON mapping for all records; field names match the record members.
// Decoding is strict: unknown enum names, missing required keys and
// non-hundredth numbers throw aipat::Error(structural).
namespace aipat {

using Json = nlohmann::json;

void to_json(Json& j, const Decimal& d);
void from_json(const Json& j, Decimal& d);

void to_json(Json& j, const Question& q);
void from_json(const Json& j, Question& q);
void to_json(Json& j, const RubricCriterion& c);
void from_json(const Json& j, RubricCriterion& c);
void to_json(Json& j, const CommonMistake& m);
void from_json(const Json& j, CommonMistake& m);
void to_json(Json& j, const Rubric& r);
void from_json(const Json& j, Rubric& r);
void to_json(Json& j, const Exam& e);
void from_json(const Json& j, Exam& e);

void to_json(Json& j, const Discrepancy& d);
void from_json(const Json& j, Discrepancy& d);
void to_json(Json& j, const VerificationVerdict& v);
void from_json(const Json& j, VerificationVerdict& v);
void to_json(Json& j, const IntegrityFinding& f);
void from_json(const Json& j, IntegrityFinding& f);
void to_json(Json& j, const Answer& a);
void from_json(const Json& j, Answer& a);
void to_json(Json& j, const Submission& s);
void from_json(const Json& j, Submission& s);

void to_json(Json& j, const GraderIdentity& g);
void from_json(const Json& j, GraderIdentity& g);
void to_json(Json& j, const CriterionScore& c);
void from_json(const Json& j, CriterionScore& c);
void to_json(Json& j, const ParsedEvaluation& p);
void from_json(const Json& j, ParsedEvaluation& p);
void to_json(Json& j, const Evaluation& e);
void from_json(const Json& j, Evaluation& e);
void to_json(Json& j, const GradingFailure& f);
void from_json(const Json& j, GradingFailure& f);

void to_json(Json& j, const Resolution& r);
void from_json(const Json& j, Resolution& r);
void to_json(Json& j, const Appeal& a);
void from_json(const Json& j, Appeal& a);
void to_json(Json& j, const GradeAdjustment& a);
void from_json(const Json& j, GradeAdjustment& a);

void to_json(Json& j, const PasswordLedgerEntry& e);
void from_json(const Json& j, PasswordLedgerEntry& e);
void to_json(Json& j, const AuditEvent& e);
void from_json(const Json& j, AuditEvent& e);

/// Reads an exam document: {"exam": {...}, "rubrics": [...]}.
struct ExamDocument {
  Exam exam;
  std::vector<Rubric> rubrics;
};
ExamDocument parse_exam_document(const Json& doc);
Json to_exam_document(const ExamDocument& doc);

}  // namespace aipat
