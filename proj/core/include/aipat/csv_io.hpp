#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "aipat/store/record_store.hpp"

namespace aipat::csv_io {

struct RowError {
  std::size_t line = 0;
  std::string message;
};

struct ImportReport {
  std::size_t rows_accepted = 0;
  std::size_t records_written = 0;
  std::size_t records_skipped = 0;
  std::vector<RowError> errors;
};

/// `student_id,question_id,transcription,scan_path`, one row per answer.
/// Rows are grouped into one submission per student (id `<exam>-<student>`).
/// Relative scan paths resolve against `base_dir`; scans are copied into the
/// blob directory when the store has one. Bad rows are reported and the rest
/// imported. An empty file or wrong header throws ErrorKind::structural.
ImportReport import_roster_csv(store::RecordStore& store, const std::string& exam_id, std::string_view content,
                               const std::filesystem::path& base_dir = ".", const std::string& actor = "import");

std::string submission_id_for(const std::string& exam_id, const std::string& student_id);

struct GradesFilter {
  std::string grader_label;  // empty = all
};

/// One row per (student, grader pass):
/// student_id,grader_kind,grader_label,temperature,pass,<question ids...>,total,normalized_total,integrity,status
/// Question cells hold the effective grade: appeal adjustments included,
/// confirmed integrity penalties applied. `status` is `complete` when every
/// question has a valid evaluation, else `incomplete`. Output is sorted and
/// byte-stable.
std::string export_grades_csv(const store::RecordStore& store, const std::string& exam_id,
                              const GradesFilter& filter = {});

/// `student_id,question_id,grader_label,session_index,criterion_id,tier,points,comment`.
/// Each (student, question, grader, session) group becomes one human
/// Evaluation; a group that fails rubric validation is rejected whole.
ImportReport import_human_grades_csv(store::RecordStore& store, const std::string& exam_id, std::string_view content,
                                     const std::string& actor = "import");

/// What remains of `grade` after withholding `fraction` of it, rounded half
/// up to the hundredth.
Decimal apply_penalty(Decimal grade, Decimal fraction);

}  // namespace aipat::csv_io
