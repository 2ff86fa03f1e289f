#include "aipat/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <set>

#include "aipat/csv.hpp"
#include "aipat/error.hpp"

namespace aipat::analytics {

namespace {

double mean_of(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

void require_pair(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    fail(ErrorKind::structural, "vectors differ in length (" + std::to_string(x.size()) + " vs " +
                                    std::to_string(y.size()) + ")");
  }
  if (x.size() < 3) fail(ErrorKind::validation, "correlation needs at least 3 pairs");
}

// Continued fraction for the incomplete beta, evaluated with the modified
// Lentz method.
double beta_continued_fraction(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  return h;
}

std::string grader_column_label(const std::string& kind, const std::string& label, const std::string& temperature,
                                const std::string& pass) {
  if (kind == "human") return "human:" + label + "|session=" + pass;
  return "model:" + label + "|t=" + temperature + "|run=" + pass;
}

std::vector<std::string> common_students(const GradeColumn& a, const GradeColumn& b) {
  std::vector<std::string> out;
  for (const auto& [s, v] : a.by_student) {
    if (b.by_student.count(s) != 0) out.push_back(s);
  }
  return out;
}

KindOutcome summarize(const std::string& kind, const std::vector<const AppealRow*>& rows) {
  KindOutcome k;
  k.exam_kind = kind;
  k.count = rows.size();
  std::vector<double> orig;
  std::vector<double> now;
  for (const auto* r : rows) {
    orig.push_back(r->normalized_original);
    now.push_back(r->normalized_new);
    if (r->changed()) {
      ++k.changed;
    } else {
      ++k.unchanged;
    }
  }
  if (!rows.empty()) {
    const auto a = descriptive_stats(orig);
    const auto b = descriptive_stats(now);
    k.original_mean = a.mean;
    k.original_std = a.std;
    k.new_mean = b.mean;
    k.new_std = b.std;
    k.average_improvement = b.mean - a.mean;
  }
  return k;
}

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

}  // namespace

std::string fixed(double value, int places) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", places, value);
  std::string s = buf;
  if (s.find_first_not_of("-0.") == std::string::npos && s.front() == '-') s.erase(0, 1);
  return s;
}

double quantile_type7(std::span<const double> sorted, double q) {
  if (sorted.empty()) fail(ErrorKind::validation, "quantile of an empty list");
  if (q < 0 || q > 1) fail(ErrorKind::range, "quantile must lie in [0,1]");
  const double pos = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0 || lo + 1 >= sorted.size()) return sorted[lo];
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

DescriptiveStats descriptive_stats(std::span<const double> values) {
  if (values.empty()) fail(ErrorKind::validation, "descriptive statistics need at least one value");
  for (double v : values) {
    if (!std::isfinite(v)) fail(ErrorKind::validation, "non-finite value in input");
  }
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  DescriptiveStats s;
  s.count = sorted.size();
  s.mean = mean_of(sorted);
  if (s.count == 1) {
    s.degenerate = true;
  } else {
    double ss = 0;
    for (double v : sorted) ss += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(ss / static_cast<double>(s.count - 1));
  }
  s.min = sorted.front();
  s.max = sorted.back();
  s.q25 = quantile_type7(sorted, 0.25);
  s.median = quantile_type7(sorted, 0.5);
  s.q75 = quantile_type7(sorted, 0.75);
  return s;
}

double regularized_incomplete_beta(double a, double b, double x) {
  if (a <= 0 || b <= 0) fail(ErrorKind::range, "incomplete beta needs positive shape parameters");
  if (x < 0 || x > 1 || std::isnan(x)) fail(ErrorKind::range, "incomplete beta argument outside [0,1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(log_front) * beta_continued_fraction(a, b, x) / a;
  return 1.0 - std::exp(log_front) * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
  if (df <= 0) fail(ErrorKind::range, "degrees of freedom must be positive");
  if (std::isinf(t)) return 0.0;
  if (std::isnan(t)) fail(ErrorKind::range, "t statistic is NaN");
  return std::clamp(regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t)), 0.0, 1.0);
}

PearsonResult pearson(std::span<const double> x, std::span<const double> y) {
  require_pair(x, y);
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxy = 0;
  double sxx = 0;
  double syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  const auto constant = [](std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [&](double e) { return e == v.front(); });
  };
  if (constant(x) || constant(y) || sxx == 0.0 || syy == 0.0) {
    fail(ErrorKind::undefined, "correlation undefined for a constant vector");
  }
  PearsonResult out;
  out.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  if (1.0 - std::fabs(out.r) < 1e-14) {
    out.r = out.r > 0 ? 1.0 : -1.0;
    out.p = 0.0;
    return out;
  }
  const double df = static_cast<double>(x.size()) - 2.0;
  const double t = out.r * std::sqrt(df / (1.0 - out.r * out.r));
  out.p = student_t_two_sided_p(t, df);
  return out;
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  require_pair(x, y);
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry).r;
}

CorrelationResult correlate(std::span<const double> x, std::span<const double> y) {
  const auto p = pearson(x, y);
  CorrelationResult c;
  c.pearson_r = p.r;
  c.p_value = p.p;
  c.spearman_rho = spearman(x, y);
  c.n = x.size();
  c.significant = c.p_value < kSignificanceLevel;
  return c;
}

ReliabilityMatrix reliability_matrix(const std::vector<GradeColumn>& columns) {
  if (columns.empty()) fail(ErrorKind::validation, "reliability matrix needs at least one grader");
  std::set<std::string> students;
  for (const auto& [s, v] : columns.front().by_student) students.insert(s);
  for (const auto& col : columns) {
    std::set<std::string> these;
    for (const auto& [s, v] : col.by_student) these.insert(s);
    if (these != students) {
      fail(ErrorKind::structural, "grader '" + col.label + "' does not cover the same students as '" +
                                      columns.front().label + "'");
    }
  }
  if (students.size() < 3) fail(ErrorKind::validation, "reliability needs at least 3 students");

  std::vector<std::vector<double>> vecs;
  for (const auto& col : columns) {
    std::vector<double> v;
    for (const auto& s : students) v.push_back(col.by_student.at(s));
    vecs.push_back(std::move(v));
  }
  ReliabilityMatrix m;
  m.n = students.size();
  const std::size_t k = columns.size();
  m.cells.assign(k, std::vector<std::optional<double>>(k));
  for (std::size_t i = 0; i < k; ++i) {
    m.labels.push_back(columns[i].label);
    m.cells[i][i] = 1.0;
    for (std::size_t j = i + 1; j < k; ++j) {
      std::optional<double> r;
      try {
        r = pearson(vecs[i], vecs[j]).r;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::undefined) throw;
      }
      m.cells[i][j] = r;
      m.cells[j][i] = r;
    }
  }
  return m;
}

AppealRows read_appeal_rows(std::string_view csv_text) {
  const auto records = csv::parse(csv_text);
  const std::vector<std::string> expected{"appeal_id",   "exam_kind", "original_total",     "new_total",
                                          "decision",    "normalized_original", "normalized_new"};
  if (records.empty() || records.front().fields != expected) {
    std::string want = csv::format_row(expected);
    want.resize(want.size() - 2);
    fail(ErrorKind::structural, "appeal CSV header must be " + want);
  }
  AppealRows out;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& rec = records[i];
    auto reject = [&](std::string reason) { out.rejected.push_back({rec.line, std::move(reason)}); };
    if (rec.fields.size() != expected.size()) {
      reject("expected " + std::to_string(expected.size()) + " fields, got " + std::to_string(rec.fields.size()));
      continue;
    }
    AppealRow row;
    row.line = rec.line;
    row.appeal_id = rec.fields[0];
    const auto kind = enum_from<ExamKind>(rec.fields[1]);
    if (!kind) {
      reject("unknown exam kind '" + rec.fields[1] + "'");
      continue;
    }
    row.exam_kind = *kind;
    const auto orig = Decimal::parse(rec.fields[2]);
    const auto now = Decimal::parse(rec.fields[3]);
    if (!orig || !now) {
      reject("totals must be decimals with at most two places");
      continue;
    }
    row.original_total = *orig;
    row.new_total = *now;
    const auto decision = enum_from<AppealDecision>(rec.fields[4]);
    if (!decision) {
      reject("unknown decision '" + rec.fields[4] + "'");
      continue;
    }
    row.decision = *decision;
    try {
      std::size_t used = 0;
      row.normalized_original = std::stod(rec.fields[5], &used);
      if (used != rec.fields[5].size()) throw std::invalid_argument("trailing text");
      row.normalized_new = std::stod(rec.fields[6], &used);
      if (used != rec.fields[6].size()) throw std::invalid_argument("trailing text");
    } catch (const std::exception&) {
      reject("normalized grades must be numbers");
      continue;
    }
    if (row.normalized_original < 0 || row.normalized_original > 100 || row.normalized_new < 0 ||
        row.normalized_new > 100) {
      reject("normalized grades must lie in [0,100]");
      continue;
    }
    out.rows.push_back(std::move(row));
  }
  return out;
}

double AppealOutcomeReport::change_rate() const {
  return overall.count == 0 ? 0.0 : static_cast<double>(overall.changed) / static_cast<double>(overall.count);
}

AppealOutcomeReport appeal_report(const std::vector<AppealRow>& rows, std::vector<RejectedRow> rejected) {
  AppealOutcomeReport report;
  report.rejected = std::move(rejected);
  std::vector<const AppealRow*> all;
  for (const auto& r : rows) all.push_back(&r);
  for (ExamKind kind : {ExamKind::quiz, ExamKind::midterm, ExamKind::final}) {
    std::vector<const AppealRow*> subset;
    for (const auto* r : all) {
      if (r->exam_kind == kind) subset.push_back(r);
    }
    if (!subset.empty()) report.per_kind.push_back(summarize(std::string(enum_name(kind)), subset));
  }
  report.overall = summarize("overall", all);
  return report;
}

std::string format_percent(double fraction) {
  return fixed(std::round(fraction * 100.0), 0) + "%";
}

std::string appeal_report_csv(const AppealOutcomeReport& report) {
  csv::Writer w;
  w.row({"exam_kind", "count", "original_mean", "original_std", "new_mean", "new_std", "average_improvement", "changed",
         "unchanged", "change_rate"});
  auto emit = [&](const KindOutcome& k) {
    const double rate = k.count == 0 ? 0.0 : static_cast<double>(k.changed) / static_cast<double>(k.count);
    w.row({k.exam_kind, std::to_string(k.count), fixed(k.original_mean), fixed(k.original_std), fixed(k.new_mean),
           fixed(k.new_std), fixed(k.average_improvement), std::to_string(k.changed), std::to_string(k.unchanged),
           format_percent(rate)});
  };
  for (const auto& k : report.per_kind) emit(k);
  emit(report.overall);
  return w.str();
}

Json appeal_report_json(const AppealOutcomeReport& report) {
  auto kind_json = [](const KindOutcome& k) {
    return Json{{"exam_kind", k.exam_kind},         {"count", k.count},
                {"original_mean", k.original_mean}, {"original_std", k.original_std},
                {"new_mean", k.new_mean},           {"new_std", k.new_std},
                {"average_improvement", k.average_improvement},
                {"changed", k.changed},             {"unchanged", k.unchanged}};
  };
  Json per_kind = Json::array();
  for (const auto& k : report.per_kind) per_kind.push_back(kind_json(k));
  Json rejected = Json::array();
  for (const auto& r : report.rejected) rejected.push_back(Json{{"line", r.line}, {"reason", r.reason}});
  Json overall = kind_json(report.overall);
  overall["change_rate"] = format_percent(report.change_rate());
  return Json{{"per_kind", per_kind}, {"overall", overall}, {"rejected", rejected}};
}

std::vector<GradeColumn> read_grade_columns(std::string_view grades_csv, bool normalized) {
  const auto records = csv::parse(grades_csv);
  if (records.empty()) fail(ErrorKind::structural, "grades CSV is empty");
  const auto& header = records.front().fields;
  auto index_of = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) fail(ErrorKind::structural, "grades CSV lacks column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_student = index_of("student_id");
  const std::size_t c_kind = index_of("grader_kind");
  const std::size_t c_label = index_of("grader_label");
  const std::size_t c_temp = index_of("temperature");
  const std::size_t c_pass = index_of("pass");
  const std::size_t c_value = index_of(normalized ? "normalized_total" : "total");
  const std::size_t c_status = index_of("status");

  std::vector<GradeColumn> columns;
  std::map<std::string, std::size_t> by_label;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& f = records[i].fields;
    if (f.size() != header.size()) {
      fail(ErrorKind::structural, "line " + std::to_string(records[i].line) + ": field count differs from header");
    }
    if (f[c_status] != "complete") continue;
    const std::string label = grader_column_label(f[c_kind], f[c_label], f[c_temp], f[c_pass]);
    auto [it, inserted] = by_label.emplace(label, columns.size());
    if (inserted) columns.push_back({label, {}});
    double value = 0;
    try {
      value = std::stod(f[c_value]);
    } catch (const std::exception&) {
      fail(ErrorKind::structural, "line " + std::to_string(records[i].line) + ": total is not a number");
    }
    if (!columns[it->second].by_student.emplace(f[c_student], value).second) {
      fail(ErrorKind::structural, "line " + std::to_string(records[i].line) + ": student '" + f[c_student] +
                                      "' appears twice for " + label);
    }
  }
  return columns;
}

std::string descriptive_csv(const std::vector<GradeColumn>& columns) {
  csv::Writer w;
  w.row({"grader", "count", "mean", "std", "min", "q25", "median", "q75", "max"});
  for (const auto& col : columns) {
    std::vector<double> v;
    for (const auto& [s, x] : col.by_student) v.push_back(x);
    if (v.empty()) continue;
    const auto d = descriptive_stats(v);
    w.row({col.label, std::to_string(d.count), fixed(d.mean), fixed(d.std), fixed(d.min), fixed(d.q25),
           fixed(d.median), fixed(d.q75), fixed(d.max)});
  }
  return w.str();
}

Json descriptive_json(const std::vector<GradeColumn>& columns) {
  Json out = Json::array();
  for (const auto& col : columns) {
    std::vector<double> v;
    for (const auto& [s, x] : col.by_student) v.push_back(x);
    if (v.empty()) continue;
    const auto d = descriptive_stats(v);
    out.push_back(Json{{"grader", col.label}, {"count", d.count}, {"mean", d.mean},     {"std", d.std},
                       {"min", d.min},        {"q25", d.q25},     {"median", d.median}, {"q75", d.q75},
                       {"max", d.max},        {"degenerate", d.degenerate}});
  }
  return out;
}

namespace {

struct PairOutcome {
  std::string a;
  std::string b;
  std::size_t n = 0;
  std::optional<CorrelationResult> result;
};

std::vector<PairOutcome> pairwise(const std::vector<GradeColumn>& columns) {
  std::vector<PairOutcome> out;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    for (std::size_t j = i + 1; j < columns.size(); ++j) {
      PairOutcome p{columns[i].label, columns[j].label, 0, std::nullopt};
      const auto students = common_students(columns[i], columns[j]);
      p.n = students.size();
      std::vector<double> x;
      std::vector<double> y;
      for (const auto& s : students) {
        x.push_back(columns[i].by_student.at(s));
        y.push_back(columns[j].by_student.at(s));
      }
      try {
        p.result = correlate(x, y);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::undefined && e.kind() != ErrorKind::validation) throw;
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

}  // namespace

std::string correlation_csv(const std::vector<GradeColumn>& columns) {
  csv::Writer w;
  w.row({"grader_a", "grader_b", "n", "pearson_r", "p_value", "spearman_rho", "significant"});
  for (const auto& p : pairwise(columns)) {
    if (!p.result) {
      w.row({p.a, p.b, std::to_string(p.n), "undefined", "undefined", "undefined", "undefined"});
      continue;
    }
    w.row({p.a, p.b, std::to_string(p.n), fixed(p.result->pearson_r, 4), fixed(p.result->p_value, 4),
           fixed(p.result->spearman_rho, 4), p.result->significant ? "true" : "false"});
  }
  return w.str();
}

Json correlation_json(const std::vector<GradeColumn>& columns) {
  Json out = Json::array();
  for (const auto& p : pairwise(columns)) {
    Json j{{"grader_a", p.a}, {"grader_b", p.b}, {"n", p.n}};
    if (p.result) {
      j["pearson_r"] = p.result->pearson_r;
      j["p_value"] = p.result->p_value;
      j["spearman_rho"] = p.result->spearman_rho;
      j["significant"] = p.result->significant;
    } else {
      j["pearson_r"] = nullptr;
      j["p_value"] = nullptr;
      j["spearman_rho"] = nullptr;
      j["significant"] = nullptr;
    }
    out.push_back(std::move(j));
  }
  return out;
}

std::string reliability_csv(const ReliabilityMatrix& m) {
  csv::Writer w;
  std::vector<std::string> header{"grader"};
  header.insert(header.end(), m.labels.begin(), m.labels.end());
  w.row(header);
  for (std::size_t i = 0; i < m.labels.size(); ++i) {
    std::vector<std::string> row{m.labels[i]};
    for (const auto& cell : m.cells[i]) row.push_back(cell ? fixed(*cell, 4) : "undefined");
    w.row(row);
  }
  return w.str();
}

Json reliability_json(const ReliabilityMatrix& m) {
  Json cells = Json::array();
  for (const auto& row : m.cells) {
    Json r = Json::array();
    for (const auto& c : row) r.push_back(optional_number(c));
    cells.push_back(std::move(r));
  }
  return Json{{"labels", m.labels}, {"n", m.n}, {"cells", cells}};
}

}  // namespace aipat::analytics
