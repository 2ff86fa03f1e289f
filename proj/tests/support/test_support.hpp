#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>

#include "aipat/json_io.hpp"
#include "aipat/store/record_store.hpp"
#include "aipat/time.hpp"

namespace aipat::testing {

inline std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(AIPAT_FIXTURE_DIR) / name; }

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng{std::random_device{}()};
    path_ = std::filesystem::temp_directory_path() / ("aipat-test-" + std::to_string(rng()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// The copy-constructor question: criteria c1 (3), c2 (3), c3 (2); max 8.
inline ExamDocument midterm_doc() { return parse_exam_document(Json::parse(read_file(fixture("midterm_exam.json")))); }

inline ExamDocument exam_with_id(const std::string& id, ExamKind kind = ExamKind::midterm) {
  auto doc = midterm_doc();
  doc.exam.id = id;
  doc.exam.kind = kind;
  for (auto& q : doc.exam.questions) q.exam_id = id;
  return doc;
}

inline store::AuditNote note(AuditAction action, const std::string& actor = "tester") { return {actor, action, "", ""}; }

inline Submission make_submission(const std::string& exam_id, const std::string& student, const std::string& answer,
                                  const std::string& scan_ref = "") {
  Submission s;
  s.id = exam_id + "-" + student;
  s.student_id = student;
  s.exam_id = exam_id;
  s.answers["q1"] = Answer{scan_ref, answer};
  return s;
}

/// Marks a submission verified through the normal transition.
inline void mark_verified(store::RecordStore& st, const std::string& id) {
  st.update_submission(id, [](Submission& s) { s.integrity_status = IntegrityStatus::verified; },
                       note(AuditAction::verification_recorded, "verifier"));
}

inline std::string sample_reply(const std::string& feedback = "Good.") {
  return R"({"criteria":[{"criterion_id":"c1","tier":"full","points":3,"justification":"ok"},)"
         R"({"criterion_id":"c2","tier":"partial","points":1.5,"justification":"half"},)"
         R"({"criterion_id":"c3","tier":"none","points":0,"justification":"missing"}],)"
         R"("overall_feedback":")" + feedback + R"(","total":4.5})";
}

/// A rubric-consistent evaluation with random tiers and partial points.
inline ParsedEvaluation random_evaluation(std::mt19937_64& rng, const Rubric& rubric) {
  ParsedEvaluation e;
  for (const auto& c : rubric.criteria) {
    CriterionScore s{c.id, Tier::none, kZero, "j" + std::to_string(rng() % 1000)};
    const auto pick = rng() % 3;
    if (pick == 0) {
      s.tier = Tier::full;
      s.points = c.max_points;
    } else if (pick == 1 && c.max_points.hundredths() > 1) {
      s.tier = Tier::partial;
      s.points = Decimal::from_hundredths(1 + static_cast<std::int64_t>(rng() % (c.max_points.hundredths() - 1)));
    }
    e.total += s.points;
    e.per_criterion.push_back(std::move(s));
  }
  e.overall_feedback = "Feedback \"quoted\" with unicode \u00e9 #" + std::to_string(rng() % 100);
  return e;
}

}  // namespace aipat::testing
