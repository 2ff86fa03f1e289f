#include <gtest/gtest.h>

#include <functional>

#include "aipat/appeals.hpp"
#include "aipat/csv.hpp"
#include "aipat/error.hpp"
#include "aipat/gateway/mock_provider.hpp"
#include "test_support.hpp"

using namespace aipat;
using namespace aipat::appeals;
using namespace std::chrono_literals;

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
  gateway::ProviderHandle reviewer{mock, gateway::ProviderPolicy{100000, 1, 1ms, 2.0, 10ms}, clock};
  std::string ev_id = "ev-s1";

  Fixture() {
    st->register_exam(aipat::testing::midterm_doc(), aipat::testing::note(AuditAction::exam_registered));
    const auto s = aipat::testing::make_submission("midterm", "s1", "MyClass(MyClass o) recurses");
    st->upsert_submission(s, aipat::testing::note(AuditAction::submission_ingested));
    aipat::testing::mark_verified(*st, s.id);
    Evaluation ev;
    ev.id = ev_id;
    ev.submission_id = s.id;
    ev.question_id = "q1";
    ev.grader.label = "m";
    ev.parsed = std::get<ParsedEvaluation>(
        gateway::parse_evaluation(aipat::testing::sample_reply(), aipat::testing::midterm_doc().rubrics[0]));
    ev.created_at = clock.now();
    st->insert_evaluation(ev, aipat::testing::note(AuditAction::evaluation_recorded));
  }

  void reply(const std::string& text) {
    mock->script_when([](const gateway::ChatRequest&) { return true; }, {gateway::MockOutcome::reply(text)});
  }

  std::string submit() { return submit_appeal(*st, ev_id, "s1", "c2 was fully explained").id; }

  std::optional<Resolution> review(const std::string& id) {
    return review_appeal(*st, assemble_review_packet(*st, id), reviewer);
  }
};

const char* kAdjust = R"({"decision":"adjust","adjustments":[{"criterion_id":"c2","points":3}],"explanation":"c2 is complete."})";

}  // namespace

TEST(Appeals, SubmitRules) {
  Fixture f;
  EXPECT_EQ(kind_of([&] { submit_appeal(*f.st, f.ev_id, "s2", "mine"); }), ErrorKind::authorization);
  EXPECT_EQ(kind_of([&] { submit_appeal(*f.st, f.ev_id, "s1", "   "); }), ErrorKind::validation);
  EXPECT_EQ(kind_of([&] { submit_appeal(*f.st, "ev-none", "s1", "x"); }), ErrorKind::not_found);
  f.submit();
  EXPECT_EQ(kind_of([&] { f.submit(); }), ErrorKind::conflict);
}

TEST(Appeals, WindowIsEnforced) {
  Fixture f;
  f.clock.advance(15 * 24h);
  EXPECT_EQ(kind_of([&] { f.submit(); }), ErrorKind::state);
  AppealPolicy longer;
  longer.window = 30 * 24h;
  EXPECT_NO_THROW(submit_appeal(*f.st, f.ev_id, "s1", "late but allowed", longer));
}

TEST(Appeals, PacketComesFromStoredRecords) {
  Fixture f;
  const auto id = f.submit();
  const auto p = assemble_review_packet(*f.st, id);
  EXPECT_EQ(f.st->appeal(id)->state, AppealState::under_review);
  EXPECT_EQ(p.submission_answer, "MyClass(MyClass o) recurses");
  EXPECT_EQ(p.student_appeal, "c2 was fully explained");
  EXPECT_EQ(p.initial_evaluation.total, Decimal::from_hundredths(450));
  const auto again = assemble_review_packet(*f.st, id);
  EXPECT_EQ(serialize_packet(again), serialize_packet(p));
  const auto text = serialize_packet(p);
  std::size_t last = 0;
  for (const char* h : {"## System Prompt", "## Question", "## Grading Rubric", "## Student Submission",
                        "## Initial Evaluation", "## Student Appeal", "## Output Format"}) {
    const auto pos = text.find(h);
    ASSERT_NE(pos, std::string::npos) << h;
    EXPECT_GE(pos, last);
    last = pos;
  }
}

TEST(Appeals, FullFlowAdjustAcceptPublish) {
  Fixture f;
  f.reply(kAdjust);
  const auto id = f.submit();
  const auto proposal = f.review(id);
  ASSERT_TRUE(proposal.has_value());
  EXPECT_EQ(proposal->decision, AppealDecision::adjust);
  EXPECT_EQ(proposal->original_total, Decimal::from_hundredths(450));
  EXPECT_EQ(proposal->new_total, Decimal(6));
  EXPECT_TRUE(proposal->confirmed_by.empty());
  // Nothing changes before a human confirms.
  EXPECT_EQ(f.st->effective_total(f.ev_id), Decimal::from_hundredths(450));
  EXPECT_EQ(kind_of([&] { finalize_resolution(*f.st, id, {}, ""); }), ErrorKind::validation);

  const auto r = finalize_resolution(*f.st, id, {}, "prof");
  ASSERT_TRUE(r.has_value());
  EXPECT_EQ(r->confirmed_by, "prof");
  EXPECT_EQ(f.st->appeal(id)->state, AppealState::resolved_changed);
  EXPECT_EQ(f.st->effective_total(f.ev_id), Decimal(6));
  EXPECT_EQ(publish_resolution(*f.st, id, "prof").state, AppealState::published);
  EXPECT_EQ(kind_of([&] { publish_resolution(*f.st, id, "prof"); }), ErrorKind::state);

  const auto rows = csv::parse(export_appeals_csv(*f.st));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1].fields, (std::vector<std::string>{id, "midterm", "4.5", "6", "adjust", "56.25", "75.00"}));
}

TEST(Appeals, DefaultMockUpholds) {
  Fixture f;
  const auto id = f.submit();
  const auto proposal = f.review(id);
  ASSERT_TRUE(proposal.has_value());
  EXPECT_EQ(proposal->decision, AppealDecision::uphold);
  finalize_resolution(*f.st, id, {}, "prof");
  EXPECT_EQ(f.st->appeal(id)->state, AppealState::resolved_unchanged);
  EXPECT_EQ(f.st->adjustments(f.ev_id).at(0).delta, kZero);
}

TEST(Appeals, DecreaseOrOverMaxGoesToManual) {
  for (const char* bad :
       {R"({"decision":"adjust","adjustments":[{"criterion_id":"c1","points":1}],"explanation":"lower"})",
        R"({"decision":"adjust","adjustments":[{"criterion_id":"c2","points":4}],"explanation":"too much"})",
        "no json here"}) {
    Fixture f;
    f.reply(bad);
    const auto id = f.submit();
    EXPECT_FALSE(f.review(id).has_value()) << bad;
    const auto a = *f.st->appeal(id);
    EXPECT_EQ(a.state, AppealState::under_review);
    EXPECT_TRUE(a.needs_manual);
    EXPECT_FALSE(a.manual_reason.empty());
    // An instructor may still decrease through a manual proposal.
    const auto manual = propose_manual(*f.st, id, "prof", {{"c1", Decimal(2)}}, "c1 overstated");
    EXPECT_EQ(manual.new_total, Decimal::from_hundredths(350));
    finalize_resolution(*f.st, id, {}, "prof");
    EXPECT_EQ(f.st->effective_total(f.ev_id), Decimal::from_hundredths(350));
  }
}

TEST(Appeals, RejectToManualThenOverride) {
  Fixture f;
  f.reply(kAdjust);
  const auto id = f.submit();
  f.review(id);
  ReviewerDecision reject{ReviewerAction::reject_to_manual, {}, "too generous"};
  EXPECT_FALSE(finalize_resolution(*f.st, id, reject, "prof").has_value());
  auto a = *f.st->appeal(id);
  EXPECT_EQ(a.state, AppealState::proposed);
  EXPECT_TRUE(a.needs_manual);
  EXPECT_EQ(kind_of([&] { finalize_resolution(*f.st, id, {}, "prof"); }), ErrorKind::state);
  ReviewerDecision override_{ReviewerAction::override_, {{"c2", Decimal(2)}}, "partly right"};
  const auto r = finalize_resolution(*f.st, id, override_, "prof");
  ASSERT_TRUE(r.has_value());
  EXPECT_TRUE(r->overridden);
  EXPECT_EQ(r->new_total, Decimal::from_hundredths(500));
  EXPECT_EQ(f.st->appeal(id)->state, AppealState::resolved_changed);
}

TEST(Appeals, GatewayExhaustionLeavesUnderReview) {
  Fixture f;
  f.mock->script_when([](const gateway::ChatRequest&) { return true; }, {gateway::MockOutcome::timeout()});
  const auto id = f.submit();
  EXPECT_EQ(kind_of([&] { f.review(id); }), ErrorKind::unavailable);
  EXPECT_EQ(f.st->appeal(id)->state, AppealState::under_review);
  EXPECT_FALSE(f.st->appeal(id)->needs_manual);
}

TEST(Appeals, SecondAppealBuildsOnLedger) {
  Fixture f;
  AppealPolicy two;
  two.max_appeals_per_evaluation = 2;
  f.mock->script_when([](const gateway::ChatRequest&) { return true; },
                      {gateway::MockOutcome::reply(kAdjust),
                       gateway::MockOutcome::reply(
                           R"({"decision":"adjust","adjustments":[{"criterion_id":"c3","points":2}],"explanation":"c3 too."})")});
  const auto first = submit_appeal(*f.st, f.ev_id, "s1", "c2", two).id;
  f.review(first);
  finalize_resolution(*f.st, first, {}, "prof");
  const auto second = submit_appeal(*f.st, f.ev_id, "s1", "c3", two).id;
  const auto p = f.review(second);
  ASSERT_TRUE(p.has_value());
  EXPECT_EQ(p->original_total, Decimal(6));
  EXPECT_EQ(p->new_total, Decimal(8));
  finalize_resolution(*f.st, second, {}, "prof");
  EXPECT_EQ(f.st->effective_total(f.ev_id), Decimal(8));
  EXPECT_EQ(kind_of([&] { submit_appeal(*f.st, f.ev_id, "s1", "third", two); }), ErrorKind::conflict);
}

TEST(ReviewReply, Parsing) {
  EXPECT_TRUE(gateway::parsed_ok(parse_review_reply(kAdjust)));
  EXPECT_FALSE(gateway::parsed_ok(parse_review_reply(R"({"decision":"uphold","adjustments":[{"criterion_id":"c1","points":1}],"explanation":"x"})")));
  EXPECT_FALSE(gateway::parsed_ok(parse_review_reply(R"({"decision":"adjust","adjustments":[],"explanation":"x"})")));
  EXPECT_FALSE(gateway::parsed_ok(parse_review_reply(R"({"decision":"adjust","adjustments":[{"criterion_id":"c1","points":1.234}],"explanation":"x"})")));
  EXPECT_FALSE(gateway::parsed_ok(parse_review_reply(R"({"decision":"uphold","explanation":""})")));
}

TEST(AppealStates, TransitionTableIsExact) {
  using S = AppealState;
  const S all[] = {S::submitted, S::under_review, S::proposed, S::resolved_changed, S::resolved_unchanged, S::published};
  for (S from : all) {
    for (S to : all) {
      const bool expected = (from == S::submitted && to == S::under_review) ||
                            (from == S::under_review && to == S::proposed) ||
                            (from == S::proposed && (to == S::resolved_changed || to == S::resolved_unchanged)) ||
                            ((from == S::resolved_changed || from == S::resolved_unchanged) && to == S::published);
      EXPECT_EQ(appeal_transition_allowed(from, to), expected) << enum_name(from) << "->" << enum_name(to);
    }
  }
}
