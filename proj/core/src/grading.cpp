#include "aipat/grading.hpp"

#include <atomic>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "aipat/digest.hpp"
#include "aipat/error.hpp"
#include "aipat/gateway/structured_output.hpp"
#include "aipat/json_io.hpp"
#include "aipat/prompt_contract.hpp"

namespace aipat::grading {

namespace {

std::string language_label(LanguageContext lc) {
  switch (lc) {
    case LanguageContext::cpp: return "C++";
    case LanguageContext::java: return "Java";
    case LanguageContext::either: return "C++ or Java";
  }
  return "C++ or Java";
}

bool is_blank(const std::string& answer) {
  return answer.find_first_not_of(" \t\r\n") == std::string::npos;
}

std::string criteria_order(const Rubric& rubric) {
  std::string out;
  for (const auto& c : rubric.criteria) {
    if (!out.empty()) out += ", ";
    out += c.id + " (max " + c.max_points.to_string() + ")";
  }
  return out;
}

struct Cell {
  Submission submission;
  const Question* question;
  const Rubric* rubric;
  GraderIdentity grader;
  std::string id;
};

bool gateway_gave_up(ErrorKind k) {
  return k == ErrorKind::retries_exhausted || k == ErrorKind::provider_auth || k == ErrorKind::validation ||
         k == ErrorKind::unavailable;
}

ParsedEvaluation zero_evaluation(const Rubric& rubric) {
  ParsedEvaluation p;
  for (const auto& c : rubric.criteria) p.per_criterion.push_back({c.id, Tier::none, kZero, "No answer was given."});
  p.overall_feedback = "The question was left blank.";
  return p;
}

}  // namespace

PromptBundle build_grading_prompt(const Question& question, const std::string& answer, const Rubric& rubric,
                                  const GradingConfig& config, const std::string& exam_system_prompt) {
  PromptBundle b;
  b.schema_version = std::string(prompt::kGradingSchemaVersion);
  b.blank_answer = is_blank(answer);
  if (!exam_system_prompt.empty()) {
    b.system_message = exam_system_prompt;
  } else if (!config.system_message.empty()) {
    b.system_message = config.system_message;
  } else {
    b.system_message = std::string(prompt::kDefaultSystemRole);
  }

  std::ostringstream u;
  u << "## Question\n"
    << "Language: " << language_label(question.language_context) << "\n"
    << "Maximum points: " << question.max_points.to_string() << "\n"
    << question.text << "\n\n";

  u << "## Student Answer\n" << prompt::kOpenFence << "\n" << answer << "\n" << prompt::kCloseFence << "\n";
  if (b.blank_answer) u << prompt::kBlankAnswerDirective << "\n";
  u << "\n";

  u << "## Grading Guidelines\n";
  for (const auto& c : rubric.criteria) {
    const std::string max = c.max_points.to_string();
    u << "Criterion " << c.id << ": " << c.title << " (max " << max << ")\n"
      << "- Full points (" << max << "): " << c.full_descriptor << "\n"
      << "- Partial points (more than 0, less than " << max << "): " << c.partial_descriptor << "\n"
      << "- No points (0): " << c.none_descriptor << "\n";
  }
  u << "\n";

  u << "## Output Format\n"
    << prompt::kContractPrefix << prompt::kGradingSchemaVersion << "\n"
    << "Reply with one JSON object and nothing else:\n"
    << R"({"criteria": [{"criterion_id": text, "tier": "full" | "partial" | "none", "points": number, )"
    << R"("justification": text}], "overall_feedback": text, "total": number})"
    << "\n"
    << prompt::kCriteriaOrderPrefix << criteria_order(rubric) << "\n"
    << "A full tier awards exactly the criterion maximum, none awards 0 and partial awards an amount "
       "strictly between the two, in steps of 0.01. total is the sum of the points.\n\n";

  u << "## Common Mistakes\n";
  if (rubric.common_mistakes.empty()) u << "None listed.\n";
  for (const auto& m : rubric.common_mistakes) {
    u << "- " << m.description << " (suggested penalty " << m.suggested_penalty.to_string() << ")\n";
  }
  u << "\n";

  u << "## Feedback Instructions\n" << config.feedback_instructions << "\n";
  b.user_message = u.str();

  FieldHasher h;
  h.add(b.schema_version)
      .add(b.system_message)
      .add(Json(question).dump())
      .add(answer)
      .add(Json(rubric).dump())
      .add(config.feedback_instructions);
  b.components_digest = h.hex();
  return b;
}

ValidationResult validate_evaluation(const ParsedEvaluation& parsed, const Rubric& rubric) {
  ValidationResult r;
  std::set<std::string> seen;
  Decimal sum;
  for (const auto& s : parsed.per_criterion) {
    const std::string field = "criteria." + s.criterion_id;
    sum += s.points;
    const RubricCriterion* c = rubric.find(s.criterion_id);
    if (c == nullptr) {
      r.violations.push_back({field, "unknown criterion '" + s.criterion_id + "'"});
      continue;
    }
    if (!seen.insert(s.criterion_id).second) {
      r.violations.push_back({field, "duplicate criterion '" + s.criterion_id + "'"});
      continue;
    }
    if (s.points < kZero) {
      r.violations.push_back({field, "negative points " + s.points.to_string()});
    } else if (s.points > c->max_points) {
      r.violations.push_back(
          {field, "points " + s.points.to_string() + " exceeds criterion max " + c->max_points.to_string()});
    } else if (s.tier == Tier::full && s.points != c->max_points) {
      r.violations.push_back({field, "full tier must equal max (" + c->max_points.to_string() + ")"});
    } else if (s.tier == Tier::none && s.points != kZero) {
      r.violations.push_back({field, "none tier must be 0"});
    } else if (s.tier == Tier::partial && (s.points == kZero || s.points == c->max_points)) {
      r.violations.push_back({field, "partial tier must lie strictly between 0 and max"});
    }
  }
  for (const auto& c : rubric.criteria) {
    if (seen.count(c.id) == 0) r.violations.push_back({"criteria." + c.id, "missing criterion '" + c.id + "'"});
  }
  if (sum != parsed.total) {
    r.violations.push_back({"total", "total mismatch: reported " + parsed.total.to_string() + ", criteria sum to " +
                                         sum.to_string()});
  }
  return r;
}

std::string cell_id(const std::string& submission_id, const std::string& question_id, const GraderIdentity& grader) {
  return "ev-" + FieldHasher().add(submission_id).add(question_id).add(grader.key()).hex().substr(0, 24);
}

GradingSummary grade_batch(const GradingJob& job, const gateway::ProviderRegistry& registry,
                           store::RecordStore& store, const GradingConfig& config) {
  if (job.runs_per_grader < 1) fail(ErrorKind::validation, "runs_per_grader must be at least 1");
  if (job.graders.empty()) fail(ErrorKind::validation, "a grading job needs at least one grader");
  const auto exam = store.exam(job.exam_id);
  if (!exam) fail(ErrorKind::not_found, "unknown exam '" + job.exam_id + "'");
  std::set<std::string> grader_keys;
  for (const auto& g : job.graders) {
    if (g.kind != GraderKind::model) fail(ErrorKind::validation, "human grades enter through import, not grading jobs");
    if (g.label.empty()) fail(ErrorKind::validation, "grader label must be non-empty");
    if (!registry.contains(g.provider_id)) fail(ErrorKind::not_found, "unknown provider '" + g.provider_id + "'");
    GraderIdentity probe = g;
    probe.run_index = 1;
    if (!grader_keys.insert(probe.key()).second) fail(ErrorKind::validation, "duplicate grader " + probe.key());
  }

  std::vector<Submission> subs;
  if (job.submission_ids.empty()) {
    subs = store.submissions(job.exam_id);
  } else {
    for (const auto& id : job.submission_ids) {
      auto s = store.submission(id);
      if (!s) fail(ErrorKind::not_found, "unknown submission '" + id + "'");
      if (s->exam_id != job.exam_id) fail(ErrorKind::validation, "submission '" + id + "' belongs to another exam");
      subs.push_back(std::move(*s));
    }
  }
  for (const auto& s : subs) {
    if (s.integrity_status == IntegrityStatus::unverified) {
      fail(ErrorKind::state, "submission '" + s.id + "' has not been verified");
    }
  }

  std::vector<Rubric> rubrics;
  for (const auto& q : exam->questions) {
    auto r = store.rubric(exam->id, q.id);
    if (!r) fail(ErrorKind::integrity, "question '" + q.id + "' has no rubric");
    rubrics.push_back(std::move(*r));
  }

  std::vector<Cell> cells;
  for (const auto& s : subs) {
    for (std::size_t qi = 0; qi < exam->questions.size(); ++qi) {
      for (const auto& g : job.graders) {
        for (int run = 1; run <= job.runs_per_grader; ++run) {
          GraderIdentity gi = g;
          gi.run_index = run;
          std::string id = cell_id(s.id, exam->questions[qi].id, gi);
          cells.push_back({s, &exam->questions[qi], &rubrics[qi], std::move(gi), std::move(id)});
        }
      }
    }
  }

  GradingSummary summary;
  summary.attempted = cells.size();
  std::mutex summary_mu;
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::atomic<bool> stop{false};

  auto grade_cell = [&](const Cell& cell) {
    if (store.evaluation(cell.id)) {
      std::lock_guard lock(summary_mu);
      ++summary.skipped;
      return;
    }
    auto it = cell.submission.answers.find(cell.question->id);
    const std::string answer = it == cell.submission.answers.end() ? "" : it->second.transcription;
    const PromptBundle bundle = build_grading_prompt(*cell.question, answer, *cell.rubric, config, exam->system_prompt);

    Evaluation ev;
    ev.id = cell.id;
    ev.submission_id = cell.submission.id;
    ev.question_id = cell.question->id;
    ev.grader = cell.grader;
    ev.prompt_digest = bundle.components_digest;

    if (bundle.blank_answer && config.auto_zero_blank) {
      ev.parsed = zero_evaluation(*cell.rubric);
    } else {
      gateway::ChatRequest req;
      req.system_message = bundle.system_message;
      req.user_message = bundle.user_message;
      req.model = cell.grader.label;
      req.temperature = cell.grader.temperature;
      bool parsed = false;
      try {
        auto& handle = registry.get(cell.grader.provider_id);
        for (int attempt = 0; attempt <= config.parse_reasks && !parsed; ++attempt) {
          if (attempt > 0) req.user_message = bundle.user_message + std::string(prompt::kCorrectiveSuffix);
          const auto resp = handle.complete(req);
          ev.raw_response = resp.raw_text;
          auto result = gateway::parse_evaluation(resp.raw_text, *cell.rubric);
          if (auto* p = std::get_if<ParsedEvaluation>(&result)) {
            ev.parsed = std::move(*p);
            parsed = true;
          }
        }
      } catch (const Error& e) {
        if (!gateway_gave_up(e.kind())) throw;
        GradingFailure f{cell.id, cell.submission.id, cell.question->id, cell.grader, e.what(), store.clock().now()};
        store.record_failure(f, {config.actor, AuditAction::grading_failure_recorded, cell.id, e.what()});
        std::lock_guard lock(summary_mu);
        ++summary.failures;
        summary.failed_cells.push_back(cell.id);
        return;
      }
      if (!parsed) {
        ev.status = EvaluationStatus::manual_review;
        ev.parsed = ParsedEvaluation{};
      } else if (!validate_evaluation(ev.parsed, *cell.rubric).ok()) {
        ev.status = EvaluationStatus::manual_review;
      }
    }
    ev.created_at = store.clock().now();
    const Json detail{{"grader", ev.grader.key()}, {"status", enum_name(ev.status)}, {"prompt_digest", ev.prompt_digest}};
    const bool inserted =
        store.insert_evaluation(ev, {config.actor, AuditAction::evaluation_recorded, ev.id, detail.dump()});
    std::lock_guard lock(summary_mu);
    if (!inserted) {
      ++summary.skipped;
    } else {
      ++summary.created;
      if (ev.status == EvaluationStatus::manual_review) ++summary.manual_review;
    }
  };

  auto worker = [&] {
    while (!stop.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cells.size()) return;
      try {
        grade_cell(cells[i]);
      } catch (const std::exception& e) {
        std::lock_guard lock(summary_mu);
        if (!summary.aborted) {
          summary.aborted = true;
          summary.abort_reason = e.what();
        }
        stop = true;
        return;
      }
      const std::size_t n = done.fetch_add(1) + 1;
      if (config.on_progress) config.on_progress(n, cells.size());
    }
  };

  const std::size_t workers = std::min<std::size_t>(std::max(1, config.parallelism), std::max<std::size_t>(1, cells.size()));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t i = 0; i < workers; ++i) pool.emplace_back(worker);
  }
  return summary;
}

}  // namespace aipat::grading
