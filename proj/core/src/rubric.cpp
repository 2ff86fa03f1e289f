#include "aipat/rubric.hpp"

#include <set>

#include "aipat/error.hpp"

namespace aipat {

bool ValidationResult::mentions(const std::string& text) const {
  for (const auto& v : violations) {
    if (v.message.find(text) != std::string::npos || v.field.find(text) != std::string::npos) return true;
  }
  return false;
}

std::string ValidationResult::summary() const {
  std::string out;
  for (const auto& v : violations) {
    if (!out.empty()) out += "; ";
    out += v.field + ": " + v.message;
  }
  return out;
}

ValidationResult validate_rubric(const Rubric& rubric, const Question& question) {
  ValidationResult result;
  auto add = [&](std::string field, std::string message) {
    result.violations.push_back({std::move(field), std::move(message)});
  };

  if (rubric.question_id != question.id) {
    add("question_id", "rubric targets '" + rubric.question_id + "' but question is '" + question.id + "'");
  }
  if (question.max_points < kZero) add("max_points", "question max_points must be non-negative");
  if (rubric.criteria.empty()) {
    add("criteria", "at least one criterion required");
    return result;
  }

  std::set<std::string> seen;
  Decimal sum;
  for (std::size_t i = 0; i < rubric.criteria.size(); ++i) {
    const auto& c = rubric.criteria[i];
    const std::string where = "criteria[" + std::to_string(i) + "]";
    if (c.id.empty()) add(where + ".id", "criterion id must be non-empty");
    if (!seen.insert(c.id).second) add(where + ".id", "duplicate criterion id '" + c.id + "'");
    if (c.max_points <= kZero) add(where + ".max_points", "criterion max_points must be > 0");
    if (c.full_descriptor.empty()) add(where + ".full_descriptor", "tier descriptor must be non-empty");
    if (c.partial_descriptor.empty()) add(where + ".partial_descriptor", "tier descriptor must be non-empty");
    if (c.none_descriptor.empty()) add(where + ".none_descriptor", "tier descriptor must be non-empty");
    sum += c.max_points;
  }
  if (sum != question.max_points) {
    add("max_points", "sum mismatch: criteria total " + sum.to_string() + " but question max_points is " +
                          question.max_points.to_string());
  }
  for (std::size_t i = 0; i < rubric.common_mistakes.size(); ++i) {
    const auto& m = rubric.common_mistakes[i];
    if (m.suggested_penalty > question.max_points) {
      add("common_mistakes[" + std::to_string(i) + "].suggested_penalty",
          "penalty " + m.suggested_penalty.to_string() + " exceeds question max_points");
    }
  }
  return result;
}

ValidationResult validate_exam(const Exam& exam) {
  ValidationResult result;
  std::set<std::string> ids;
  Decimal sum;
  for (const auto& q : exam.questions) {
    if (!ids.insert(q.id).second) result.violations.push_back({"questions", "duplicate question id '" + q.id + "'"});
    if (q.exam_id != exam.id) {
      result.violations.push_back({"questions." + q.id + ".exam_id", "question belongs to a different exam"});
    }
    sum += q.max_points;
  }
  if (exam.max_total <= kZero) result.violations.push_back({"max_total", "max_total must be positive"});
  if (sum != exam.max_total) {
    result.violations.push_back(
        {"max_total", "sum mismatch: questions total " + sum.to_string() + " but max_total is " +
                          exam.max_total.to_string()});
  }
  return result;
}

Decimal compute_total(const std::map<std::string, Decimal>& per_criterion_points, const Rubric& rubric) {
  Decimal total;
  for (const auto& c : rubric.criteria) {
    auto it = per_criterion_points.find(c.id);
    if (it == per_criterion_points.end()) fail(ErrorKind::structural, "missing criterion '" + c.id + "'");
    total += it->second;
  }
  for (const auto& [id, points] : per_criterion_points) {
    if (rubric.find(id) == nullptr) fail(ErrorKind::structural, "extraneous criterion '" + id + "'");
  }
  return total;
}

double normalize_grade(double raw, double max_possible) {
  if (!(max_possible > 0.0)) fail(ErrorKind::range, "max_possible must be positive");
  if (!(raw >= 0.0 && raw <= max_possible)) {
    fail(ErrorKind::range, "raw grade " + std::to_string(raw) + " outside [0, " + std::to_string(max_possible) + "]");
  }
  return 100.0 * raw / max_possible;
}

double normalize_grade(Decimal raw, Decimal max_possible) {
  if (max_possible <= kZero) fail(ErrorKind::range, "max_possible must be positive");
  if (raw < kZero || raw > max_possible) {
    fail(ErrorKind::range, "raw grade " + raw.to_string() + " outside [0, " + max_possible.to_string() + "]");
  }
  return 100.0 * static_cast<double>(raw.hundredths()) / static_cast<double>(max_possible.hundredths());
}

}  // namespace aipat
