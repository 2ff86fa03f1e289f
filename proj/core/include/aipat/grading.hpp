#pragma once

#include <functional>
#include <string>
#include <vector>

#include "aipat/gateway/provider.hpp"
#include "aipat/model.hpp"
#include "aipat/rubric.hpp"
#include "aipat/store/record_store.hpp"

namespace aipat::grading {

inline constexpr std::string_view kDefaultFeedbackInstructions =
    "Write the overall feedback to the student in two to four sentences. Start with what the answer does "
    "well, then name each missing or incorrect point and how to fix it. Refer to the criteria by title. "
    "Keep each justification to one sentence that cites the part of the answer it is based on.";

struct GradingConfig {
  std::string feedback_instructions = std::string(kDefaultFeedbackInstructions);
  // Replaces the default role prompt for exams that do not carry their own.
  std::string system_message;
  int parse_reasks = 2;
  // Blank answers are normally still sent to the grader so feedback gets
  // written; with this set they are scored none-tier locally instead.
  bool auto_zero_blank = false;
  int parallelism = 4;
  std::string actor = "grading-engine";
  std::function<void(std::size_t done, std::size_t total)> on_progress;
};

struct PromptBundle {
  std::string system_message;
  std::string user_message;
  std::string schema_version;
  std::string components_digest;
  bool blank_answer = false;
};

/// Deterministic: identical inputs give byte-identical messages. Section
/// order is question, answer, grading guidelines, output format, common
/// mistakes, feedback instructions.
PromptBundle build_grading_prompt(const Question& question, const std::string& answer, const Rubric& rubric,
                                  const GradingConfig& config = {}, const std::string& exam_system_prompt = "");

/// Per-criterion range, tier/points consistency, coverage and total.
ValidationResult validate_evaluation(const ParsedEvaluation& parsed, const Rubric& rubric);

struct GradingJob {
  std::string exam_id;
  std::vector<std::string> submission_ids;  // empty = every submission of the exam
  std::vector<GraderIdentity> graders;      // run_index is assigned per run
  int runs_per_grader = 1;
};

/// Stable id of one (submission, question, grader pass) cell.
std::string cell_id(const std::string& submission_id, const std::string& question_id, const GraderIdentity& grader);

struct GradingSummary {
  std::size_t attempted = 0;
  std::size_t created = 0;
  std::size_t skipped = 0;  // already graded by an earlier run
  std::size_t manual_review = 0;
  std::size_t failures = 0;
  std::vector<std::string> failed_cells;
  bool aborted = false;
  std::string abort_reason;
};

/// Grades every cell of the job. Re-running skips cells that already have
/// an evaluation and retries recorded failures. Gateway exhaustion is
/// recorded as a failure for that cell; a store write failure stops the job
/// and the summary reports the progress made.
GradingSummary grade_batch(const GradingJob& job, const gateway::ProviderRegistry& registry,
                           store::RecordStore& store, const GradingConfig& config = {});

}  // namespace aipat::grading
