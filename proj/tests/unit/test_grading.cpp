#include <gtest/gtest.h>

#include <functional>

#include "aipat/error.hpp"
#include "aipat/gateway/mock_provider.hpp"
#include "aipat/grading.hpp"
#include "aipat/prompt_contract.hpp"
#include "test_support.hpp"

using namespace aipat;
using namespace aipat::grading;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no aipat::Error thrown";
  return ErrorKind::io;
}

struct Fixture {
  ManualClock clock;
  std::unique_ptr<store::RecordStore> st = store::RecordStore::in_memory(clock);
  std::shared_ptr<gateway::MockProvider> mock = std::make_shared<gateway::MockProvider>();
  gateway::ProviderRegistry registry;

  explicit Fixture(int students = 3) {
    gateway::ProviderPolicy policy;
    policy.requests_per_minute = 100000;
    policy.initial_backoff = std::chrono::milliseconds{1};
    registry.add(std::make_shared<gateway::ProviderHandle>(mock, policy, clock));
    st->register_exam(aipat::testing::midterm_doc(), aipat::testing::note(AuditAction::exam_registered));
    for (int i = 1; i <= students; ++i) {
      const auto s = aipat::testing::make_submission("midterm", "s" + std::to_string(i), "answer " + std::to_string(i));
      st->upsert_submission(s, aipat::testing::note(AuditAction::submission_ingested));
      aipat::testing::mark_verified(*st, s.id);
    }
  }

  GradingJob job(int runs = 1) {
    GradingJob j;
    j.exam_id = "midterm";
    GraderIdentity g;
    g.label = "model-a";
    g.provider_id = "mock";
    j.graders = {g};
    g.label = "model-b";
    g.temperature = Decimal::from_hundredths(70);
    j.graders.push_back(g);
    j.runs_per_grader = runs;
    return j;
  }
};

const Question& question() {
  static const Question q = aipat::testing::midterm_doc().exam.questions.at(0);
  return q;
}
const Rubric& rubric() {
  static const Rubric r = aipat::testing::midterm_doc().rubrics.at(0);
  return r;
}

}  // namespace

TEST(GradingPrompt, DeterministicAndOrdered) {
  const auto a = build_grading_prompt(question(), "by value", rubric());
  const auto b = build_grading_prompt(question(), "by value", rubric());
  EXPECT_EQ(a.user_message, b.user_message);
  EXPECT_EQ(a.components_digest, b.components_digest);
  EXPECT_EQ(a.system_message, prompt::kDefaultSystemRole);
  const auto& u = a.user_message;
  std::size_t last = 0;
  for (const char* heading : {"## Question", "## Student Answer", "## Grading Guidelines", "## Output Format",
                              "## Common Mistakes", "## Feedback Instructions"}) {
    const auto pos = u.find(heading);
    ASSERT_NE(pos, std::string::npos) << heading;
    EXPECT_GE(pos, last) << heading;
    last = pos;
  }
  EXPECT_NE(u.find("c1 (max 3), c2 (max 3), c3 (max 2)"), std::string::npos);
  EXPECT_NE(u.find(rubric().criteria[1].partial_descriptor), std::string::npos);
  EXPECT_NE(build_grading_prompt(question(), "other", rubric()).components_digest, a.components_digest);
}

TEST(GradingPrompt, SystemMessagePrecedence) {
  GradingConfig cfg;
  cfg.system_message = "config role";
  EXPECT_EQ(build_grading_prompt(question(), "x", rubric(), cfg).system_message, "config role");
  EXPECT_EQ(build_grading_prompt(question(), "x", rubric(), cfg, "exam role").system_message, "exam role");
}

TEST(GradingPrompt, BlankAnswerDirective) {
  const auto b = build_grading_prompt(question(), "  \n ", rubric());
  EXPECT_TRUE(b.blank_answer);
  EXPECT_NE(b.user_message.find(prompt::kBlankAnswerDirective), std::string::npos);
  EXPECT_FALSE(build_grading_prompt(question(), "x", rubric()).blank_answer);
}

TEST(ValidateEvaluation, Rules) {
  ParsedEvaluation e{{{"c1", Tier::full, Decimal(3), ""}, {"c2", Tier::partial, Decimal(1), ""}, {"c3", Tier::none, kZero, ""}},
                     "",
                     Decimal(4)};
  EXPECT_TRUE(validate_evaluation(e, rubric()).ok());
  auto over = e;
  over.per_criterion[2] = {"c3", Tier::full, Decimal(5), ""};
  over.total = Decimal(9);
  EXPECT_TRUE(validate_evaluation(over, rubric()).mentions("exceeds criterion max"));
  auto sum = e;
  sum.total = Decimal(5);
  EXPECT_TRUE(validate_evaluation(sum, rubric()).mentions("total mismatch"));
  auto missing = e;
  missing.per_criterion.pop_back();
  EXPECT_TRUE(validate_evaluation(missing, rubric()).mentions("missing criterion"));
}

TEST(GradeBatch, CreatesOneEvaluationPerCellAndIsIdempotent) {
  Fixture f;
  const auto first = grade_batch(f.job(2), f.registry, *f.st);
  EXPECT_EQ(first.attempted, 12u);
  EXPECT_EQ(first.created, 12u);
  EXPECT_EQ(first.failures, 0u);
  for (const auto& ev : f.st->evaluations()) {
    EXPECT_EQ(ev.status, EvaluationStatus::valid);
    Decimal sum;
    for (const auto& c : ev.parsed.per_criterion) sum += c.points;
    EXPECT_EQ(sum, ev.parsed.total);
    EXPECT_TRUE(ev.parsed.total >= kZero && ev.parsed.total <= Decimal(8));
    EXPECT_FALSE(ev.prompt_digest.empty());
  }
  const auto audit = f.st->audit_count();
  const auto second = grade_batch(f.job(2), f.registry, *f.st);
  EXPECT_EQ(second.created, 0u);
  EXPECT_EQ(second.skipped, 12u);
  EXPECT_EQ(f.st->audit_count(), audit);
}

TEST(GradeBatch, UnverifiedSubmissionsAreRejected) {
  Fixture f(1);
  f.st->upsert_submission(aipat::testing::make_submission("midterm", "late", "x"),
                          aipat::testing::note(AuditAction::submission_ingested));
  EXPECT_EQ(kind_of([&] { grade_batch(f.job(), f.registry, *f.st); }), ErrorKind::state);
}

TEST(GradeBatch, JobValidation) {
  Fixture f(1);
  auto j = f.job();
  j.runs_per_grader = 0;
  EXPECT_EQ(kind_of([&] { grade_batch(j, f.registry, *f.st); }), ErrorKind::validation);
  j = f.job();
  j.graders.push_back(j.graders[0]);
  EXPECT_EQ(kind_of([&] { grade_batch(j, f.registry, *f.st); }), ErrorKind::validation);
  j = f.job();
  j.graders[0].provider_id = "nowhere";
  EXPECT_EQ(kind_of([&] { grade_batch(j, f.registry, *f.st); }), ErrorKind::not_found);
}

TEST(GradeBatch, ReasksThenManualReview) {
  Fixture f(1);
  f.mock->script_when([](const gateway::ChatRequest&) { return true; }, {gateway::MockOutcome::reply("not json")});
  auto j = f.job();
  j.graders.pop_back();
  GradingConfig cfg;
  cfg.parse_reasks = 2;
  const auto s = grade_batch(j, f.registry, *f.st, cfg);
  EXPECT_EQ(s.created, 1u);
  EXPECT_EQ(s.manual_review, 1u);
  EXPECT_EQ(f.mock->call_count(), 3);
  const auto ev = f.st->evaluations().at(0);
  EXPECT_EQ(ev.status, EvaluationStatus::manual_review);
  EXPECT_EQ(ev.raw_response, "not json");
}

TEST(GradeBatch, GatewayExhaustionRecordsFailureAndRerunRetries) {
  Fixture f(2);
  f.mock->script_when([](const gateway::ChatRequest& r) { return r.user_message.find("answer 1") != std::string::npos; },
                      {gateway::MockOutcome::timeout(), gateway::MockOutcome::timeout(), gateway::MockOutcome::timeout(),
                       gateway::MockOutcome::reply(aipat::testing::sample_reply())});
  auto j = f.job();
  j.graders.pop_back();
  const auto first = grade_batch(j, f.registry, *f.st);
  EXPECT_EQ(first.failures, 1u);
  EXPECT_EQ(first.created, 1u);
  EXPECT_EQ(f.st->failures("midterm").size(), 1u);
  const auto second = grade_batch(j, f.registry, *f.st);
  EXPECT_EQ(second.created, 1u);
  EXPECT_EQ(second.skipped, 1u);
  EXPECT_TRUE(f.st->failures("midterm").empty());
}

TEST(GradeBatch, StoreFaultAbortsWithProgress) {
  Fixture f(3);
  int writes = 0;
  f.st->set_write_fault([&writes](std::string_view c) { return c == "evaluations" && ++writes > 2; });
  GradingConfig cfg;
  cfg.parallelism = 1;
  const auto s = grade_batch(f.job(), f.registry, *f.st, cfg);
  EXPECT_TRUE(s.aborted);
  EXPECT_EQ(s.created, 2u);
  EXPECT_FALSE(s.abort_reason.empty());
}

TEST(GradeBatch, AutoZeroBlankSkipsProvider) {
  Fixture f(0);
  const auto s = aipat::testing::make_submission("midterm", "blank", "   ");
  f.st->upsert_submission(s, aipat::testing::note(AuditAction::submission_ingested));
  aipat::testing::mark_verified(*f.st, s.id);
  GradingConfig cfg;
  cfg.auto_zero_blank = true;
  grade_batch(f.job(), f.registry, *f.st, cfg);
  EXPECT_EQ(f.mock->call_count(), 0);
  for (const auto& ev : f.st->evaluations()) EXPECT_EQ(ev.parsed.total, kZero);
}

TEST(GradeBatch, CellIdsAreStable) {
  GraderIdentity g;
  g.label = "m";
  EXPECT_EQ(cell_id("s", "q", g), cell_id("s", "q", g));
  auto g2 = g;
  g2.run_index = 2;
  EXPECT_NE(cell_id("s", "q", g), cell_id("s", "q", g2));
  EXPECT_EQ(cell_id("s", "q", g).rfind("ev-", 0), 0u);
}
