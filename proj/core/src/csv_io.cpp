#include "aipat/csv_io.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <set>
#include <tuple>

#include "aipat/csv.hpp"
#include "aipat/error.hpp"
#include "aipat/grading.hpp"
#include "aipat/verifier.hpp"

namespace aipat::csv_io {

namespace {

const std::vector<std::string> kRosterHeader{"student_id", "question_id", "transcription", "scan_path"};
const std::vector<std::string> kHumanHeader{"student_id", "question_id", "grader_label", "session_index",
                                            "criterion_id", "tier", "points", "comment"};

std::string joined(const std::vector<std::string>& fields) {
  std::string out;
  for (const auto& f : fields) out += (out.empty() ? "" : ",") + f;
  return out;
}

std::vector<csv::Record> parse_with_header(std::string_view content, const std::vector<std::string>& header) {
  std::string_view text = content;
  if (text.substr(0, 3) == "\xEF\xBB\xBF") text.remove_prefix(3);  // spreadsheet BOM
  auto records = csv::parse(text);
  if (records.empty()) fail(ErrorKind::structural, "file is empty; expected header " + joined(header));
  if (records.front().fields != header) {
    fail(ErrorKind::structural, "header must be " + joined(header) + ", got " + joined(records.front().fields));
  }
  records.erase(records.begin());
  return records;
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

std::string submission_id_for(const std::string& exam_id, const std::string& student_id) {
  return exam_id + "-" + student_id;
}

Decimal apply_penalty(Decimal grade, Decimal fraction) {
  const std::int64_t keep = Decimal::kScale - fraction.hundredths();
  const std::int64_t scaled = grade.hundredths() * keep;
  const std::int64_t rounded = scaled >= 0 ? (scaled + Decimal::kScale / 2) / Decimal::kScale
                                           : -((-scaled + Decimal::kScale / 2) / Decimal::kScale);
  return Decimal::from_hundredths(rounded);
}

ImportReport import_roster_csv(store::RecordStore& store, const std::string& exam_id, std::string_view content,
                               const std::filesystem::path& base_dir, const std::string& actor) {
  const auto exam = store.exam(exam_id);
  if (!exam) fail(ErrorKind::not_found, "unknown exam '" + exam_id + "'");
  const auto records = parse_with_header(content, kRosterHeader);

  ImportReport report;
  std::map<std::string, std::map<std::string, Answer>> by_student;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& rec : records) {
    auto error = [&](std::string msg) { report.errors.push_back({rec.line, std::move(msg)}); };
    if (rec.fields.size() != kRosterHeader.size()) {
      error("expected 4 fields, got " + std::to_string(rec.fields.size()));
      continue;
    }
    const auto& student = rec.fields[0];
    const auto& qid = rec.fields[1];
    if (student.empty()) {
      error("student_id is empty");
      continue;
    }
    if (exam->find(qid) == nullptr) {
      error("unknown question_id '" + qid + "'");
      continue;
    }
    if (!seen.insert({student, qid}).second) {
      error("duplicate answer for student '" + student + "' question '" + qid + "'");
      continue;
    }
    Answer answer;
    answer.transcription = rec.fields[2];
    if (!rec.fields[3].empty()) {
      std::filesystem::path scan = rec.fields[3];
      if (scan.is_relative()) scan = base_dir / scan;
      std::error_code ec;
      if (!std::filesystem::is_regular_file(scan, ec)) {
        error("scan file not found: " + scan.string());
        continue;
      }
      try {
        answer.scan_ref = store.data_dir() ? verifier::store_blob(scan, store.blob_dir())
                                           : std::filesystem::absolute(scan).string();
      } catch (const Error& e) {
        error(e.what());
        continue;
      }
    }
    by_student[student][qid] = std::move(answer);
    ++report.rows_accepted;
  }

  for (auto& [student, answers] : by_student) {
    const std::string id = submission_id_for(exam_id, student);
    Submission sub;
    if (auto existing = store.submission(id)) {
      if (existing->integrity_status != IntegrityStatus::unverified) {
        report.errors.push_back({0, "submission '" + id + "' is already " +
                                        std::string(enum_name(existing->integrity_status)) + "; answers not replaced"});
        report.rows_accepted -= answers.size();
        continue;
      }
      sub = *existing;
      bool changed = false;
      for (auto& [q, a] : answers) {
        auto it = sub.answers.find(q);
        if (it == sub.answers.end() || it->second.transcription != a.transcription ||
            it->second.scan_ref != a.scan_ref) {
          sub.answers[q] = a;
          changed = true;
        }
      }
      if (!changed) {
        ++report.records_skipped;
        continue;
      }
    } else {
      sub.id = id;
      sub.student_id = student;
      sub.exam_id = exam_id;
      sub.received_at = store.clock().now();
      sub.answers = std::move(answers);
    }
    store.upsert_submission(sub, {actor, AuditAction::submission_ingested, id, ""});
    ++report.records_written;
  }
  return report;
}

std::string export_grades_csv(const store::RecordStore& store, const std::string& exam_id, const GradesFilter& filter) {
  const auto exam = store.exam(exam_id);
  if (!exam) fail(ErrorKind::not_found, "unknown exam '" + exam_id + "'");

  std::vector<std::string> header{"student_id", "grader_kind", "grader_label", "temperature", "pass"};
  for (const auto& q : exam->questions) header.push_back(q.id);
  header.insert(header.end(), {"total", "normalized_total", "integrity", "status"});

  std::map<std::string, Submission> subs;
  for (auto& s : store.submissions(exam_id)) subs.emplace(s.id, std::move(s));

  using RowKey = std::tuple<std::string, std::string, std::string, std::string, int>;
  struct Row {
    std::string submission_id;
    std::map<std::string, std::optional<Decimal>> cells;  // nullopt = manual review
  };
  std::map<RowKey, Row> rows;
  store::EvaluationFilter ef;
  ef.exam_id = exam_id;
  ef.grader_label = filter.grader_label;
  for (const auto& ev : store.evaluations(ef)) {
    auto sub = subs.find(ev.submission_id);
    if (sub == subs.end()) continue;
    const bool model = ev.grader.kind == GraderKind::model;
    RowKey key{sub->second.student_id, std::string(enum_name(ev.grader.kind)), ev.grader.label,
               model ? ev.grader.temperature.to_string() : "", ev.grader.pass_index()};
    Row& row = rows[key];
    row.submission_id = sub->first;
    if (ev.status != EvaluationStatus::valid) {
      row.cells[ev.question_id] = std::nullopt;
      continue;
    }
    Decimal grade = store.effective_total(ev.id);
    const auto& penalties = sub->second.confirmed_penalties;
    if (auto p = penalties.find(ev.question_id); p != penalties.end()) grade = apply_penalty(grade, p->second);
    row.cells[ev.question_id] = grade;
  }

  csv::Writer w;
  w.row(header);
  for (const auto& [key, row] : rows) {
    const auto& [student, kind, label, temperature, pass] = key;
    std::vector<std::string> fields{student, kind, label, temperature, std::to_string(pass)};
    Decimal total;
    bool complete = true;
    for (const auto& q : exam->questions) {
      auto it = row.cells.find(q.id);
      if (it == row.cells.end() || !it->second) {
        complete = false;
        fields.push_back(it == row.cells.end() ? "" : "manual_review");
        continue;
      }
      total += *it->second;
      fields.push_back(it->second->to_string());
    }
    fields.push_back(total.to_string());
    fields.push_back(fixed2(100.0 * total.to_double() / exam->max_total.to_double()));
    fields.push_back(std::string(enum_name(subs.at(row.submission_id).integrity_status)));
    fields.push_back(complete ? "complete" : "incomplete");
    w.row(fields);
  }
  return w.str();
}

ImportReport import_human_grades_csv(store::RecordStore& store, const std::string& exam_id, std::string_view content,
                                     const std::string& actor) {
  const auto exam = store.exam(exam_id);
  if (!exam) fail(ErrorKind::not_found, "unknown exam '" + exam_id + "'");
  const auto records = parse_with_header(content, kHumanHeader);

  struct Group {
    std::vector<std::size_t> lines;
    std::vector<CriterionScore> scores;
    bool bad = false;
  };
  using GroupKey = std::tuple<std::string, std::string, std::string, int>;
  std::map<GroupKey, Group> groups;
  ImportReport report;
  for (const auto& rec : records) {
    auto error = [&](std::string msg) { report.errors.push_back({rec.line, std::move(msg)}); };
    const auto& f = rec.fields;
    if (f.size() != kHumanHeader.size()) {
      error("expected 8 fields, got " + std::to_string(f.size()));
      continue;
    }
    const std::string& student = f[0];
    const std::string& qid = f[1];
    const std::string& label = f[2];
    const std::string& criterion = f[4];
    int session = 0;
    try {
      std::size_t used = 0;
      session = std::stoi(f[3], &used);
      if (used != f[3].size() || session < 1) throw std::invalid_argument("session");
    } catch (const std::exception&) {
      error("session_index must be a positive integer");
      continue;
    }
    if (student.empty() || label.empty()) {
      error("student_id and grader_label are required");
      continue;
    }
    if (exam->find(qid) == nullptr) {
      error("unknown question_id '" + qid + "'");
      continue;
    }
    const auto tier = enum_from<Tier>(f[5]);
    const auto points = Decimal::parse(f[6]);
    if (!tier) {
      error("unknown tier '" + f[5] + "'");
      continue;
    }
    if (!points) {
      error("points must be a decimal with at most two places");
      continue;
    }
    Group& g = groups[{student, qid, label, session}];
    g.lines.push_back(rec.line);
    g.scores.push_back({criterion, *tier, *points, f[7]});
    ++report.rows_accepted;
  }

  for (auto& [key, g] : groups) {
    const auto& [student, qid, label, session] = key;
    const std::size_t first_line = g.lines.front();
    auto reject = [&](std::string msg) {
      report.errors.push_back({first_line, std::move(msg)});
      report.rows_accepted -= g.lines.size();
    };
    const auto sub = store.submission(submission_id_for(exam_id, student));
    if (!sub) {
      reject("no submission for student '" + student + "'");
      continue;
    }
    const auto rubric = store.rubric(exam_id, qid);
    if (!rubric) fail(ErrorKind::integrity, "question '" + qid + "' has no rubric");

    ParsedEvaluation parsed;
    // Rubric order, whatever order the spreadsheet used.
    for (const auto& c : rubric->criteria) {
      for (const auto& s : g.scores) {
        if (s.criterion_id == c.id) parsed.per_criterion.push_back(s);
      }
    }
    for (const auto& s : g.scores) {
      if (rubric->find(s.criterion_id) == nullptr) parsed.per_criterion.push_back(s);
      parsed.total += s.points;
    }
    const auto check = grading::validate_evaluation(parsed, *rubric);
    if (!check.ok()) {
      reject(student + "/" + qid + "/" + label + " session " + std::to_string(session) + ": " + check.summary());
      continue;
    }
    Evaluation ev;
    ev.grader.kind = GraderKind::human;
    ev.grader.label = label;
    ev.grader.session_index = session;
    ev.id = grading::cell_id(sub->id, qid, ev.grader);
    ev.submission_id = sub->id;
    ev.question_id = qid;
    ev.parsed = std::move(parsed);
    ev.created_at = store.clock().now();
    if (store.insert_evaluation(ev, {actor, AuditAction::evaluation_recorded, ev.id, ev.grader.key()})) {
      ++report.records_written;
    } else {
      ++report.records_skipped;
    }
  }
  return report;
}

}  // namespace aipat::csv_io
