#pragma once

#include <map>
#include <string>
#include <vector>

#include "aipat/decimal.hpp"
#include "aipat/model.hpp"

namespace aipat {

struct Violation {
  std::string field;
  std::string message;
};

/// Returned by the validators; violations are data, never exceptions.
struct ValidationResult {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  bool mentions(const std::string& text) const;
  std::string summary() const;
};

/// Checks the rubric and question invariants jointly: at least one criterion,
/// unique criterion ids, positive maxima, non-empty tier descriptors, criteria
/// maxima summing to the question's max_points, and every suggested penalty
/// within the question's max_points.
ValidationResult validate_rubric(const Rubric& rubric, const Question& question);

/// Checks that question ids are unique and max_total equals their sum.
ValidationResult validate_exam(const Exam& exam);

/// Sum of per-criterion points. Every rubric criterion must appear exactly
/// once; missing or unknown ids throw ErrorKind::structural. No clamping.
Decimal compute_total(const std::map<std::string, Decimal>& per_criterion_points, const Rubric& rubric);

/// 100 * raw / max_possible. Throws ErrorKind::range unless
/// 0 <= raw <= max_possible and max_possible > 0.
double normalize_grade(double raw, double max_possible);
double normalize_grade(Decimal raw, Decimal max_possible);

}  // namespace aipat
