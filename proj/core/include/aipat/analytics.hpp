#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aipat/decimal.hpp"
#include "aipat/json_io.hpp"
#include "aipat/model.hpp"

namespace aipat::analytics {

inline constexpr double kSignificanceLevel = 0.05;

struct DescriptiveStats {
  std::size_t count = 0;
  double mean = 0;
  double std = 0;  // sample, ddof = 1
  double min = 0;
  double q25 = 0;
  double median = 0;
  double q75 = 0;
  double max = 0;
  bool degenerate = false;  // single value: std reported as 0
};

/// Throws ErrorKind::validation on an empty input.
DescriptiveStats descriptive_stats(std::span<const double> values);

/// Linear interpolation between order statistics at position (n-1)*q.
double quantile_type7(std::span<const double> sorted, double q);

/// I_x(a, b) by continued fraction (modified Lentz).
double regularized_incomplete_beta(double a, double b, double x);
double student_t_two_sided_p(double t, double df);

struct PearsonResult {
  double r = 0;
  double p = 1;
};

/// n >= 3. Length mismatch -> structural; constant input -> undefined.
PearsonResult pearson(std::span<const double> x, std::span<const double> y);

std::vector<double> average_ranks(std::span<const double> values);
double spearman(std::span<const double> x, std::span<const double> y);

struct CorrelationResult {
  double pearson_r = 0;
  double p_value = 1;
  double spearman_rho = 0;
  std::size_t n = 0;
  bool significant = false;
};

CorrelationResult correlate(std::span<const double> x, std::span<const double> y);

/// One grader identity's scores keyed by student.
struct GradeColumn {
  std::string label;
  std::map<std::string, double> by_student;
};

struct ReliabilityMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<std::optional<double>>> cells;  // nullopt = undefined (constant column)
  std::size_t n = 0;
};

/// Every column must cover the same students (structural otherwise), n >= 3.
ReliabilityMatrix reliability_matrix(const std::vector<GradeColumn>& columns);

// -- appeal outcomes -----------------------------------------------------------

struct AppealRow {
  std::size_t line = 0;
  std::string appeal_id;
  ExamKind exam_kind = ExamKind::quiz;
  Decimal original_total;
  Decimal new_total;
  AppealDecision decision = AppealDecision::uphold;
  double normalized_original = 0;
  double normalized_new = 0;

  bool changed() const { return decision == AppealDecision::adjust && new_total != original_total; }
};

struct RejectedRow {
  std::size_t line = 0;
  std::string reason;
};

struct AppealRows {
  std::vector<AppealRow> rows;
  std::vector<RejectedRow> rejected;
};

/// Reads the appeal export CSV. Bad rows are reported with their line
/// number; a bad header throws ErrorKind::structural.
AppealRows read_appeal_rows(std::string_view csv_text);

struct KindOutcome {
  std::string exam_kind;  // "quiz", "midterm", "final" or "overall"
  std::size_t count = 0;
  double original_mean = 0;
  double original_std = 0;
  double new_mean = 0;
  double new_std = 0;
  double average_improvement = 0;
  std::size_t changed = 0;
  std::size_t unchanged = 0;
};

struct AppealOutcomeReport {
  std::vector<KindOutcome> per_kind;  // kinds present, in quiz/midterm/final order
  KindOutcome overall;
  std::vector<RejectedRow> rejected;

  double change_rate() const;  // changed / count
};

AppealOutcomeReport appeal_report(const std::vector<AppealRow>& rows, std::vector<RejectedRow> rejected = {});

/// Whole-percent rendering, e.g. 137/185 -> "74%".
std::string format_percent(double fraction);

std::string appeal_report_csv(const AppealOutcomeReport& report);
Json appeal_report_json(const AppealOutcomeReport& report);

// -- reports over exported grades ------------------------------------------------

/// Reads the grades export and returns one column per grader pass, holding
/// the `total` (or `normalized_total` when `normalized`) of each student.
std::vector<GradeColumn> read_grade_columns(std::string_view grades_csv, bool normalized = false);

std::string descriptive_csv(const std::vector<GradeColumn>& columns);
Json descriptive_json(const std::vector<GradeColumn>& columns);
std::string correlation_csv(const std::vector<GradeColumn>& columns);
Json correlation_json(const std::vector<GradeColumn>& columns);
std::string reliability_csv(const ReliabilityMatrix& matrix);
Json reliability_json(const ReliabilityMatrix& matrix);

/// Fixed-point rendering used by every report.
std::string fixed(double value, int places = 2);

}  // namespace aipat::analytics
