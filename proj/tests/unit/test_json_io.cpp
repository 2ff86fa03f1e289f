#include <gtest/gtest.h>

#include <functional>

#include "aipat/error.hpp"
#include "aipat/json_io.hpp"
#include "test_support.hpp"

using namespace aipat;

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

}  // namespace

TEST(JsonIo, DecimalAcceptsIntegersFloatsAndStrings) {
  EXPECT_EQ(Json(3).get<Decimal>(), Decimal(3));
  EXPECT_EQ(Json(1.25).get<Decimal>(), Decimal::from_hundredths(125));
  EXPECT_EQ(Json("0.5").get<Decimal>(), Decimal::from_hundredths(50));
  EXPECT_EQ(kind_of([] { (void)Json(0.125).get<Decimal>(); }), ErrorKind::structural);
  EXPECT_EQ(kind_of([] { (void)Json(true).get<Decimal>(); }), ErrorKind::structural);
}

TEST(JsonIo, DecimalSerializesWholeValuesAsIntegers) {
  EXPECT_EQ(Json(Decimal(4)).dump(), "4");
  EXPECT_EQ(Json(Decimal::from_hundredths(150)).dump(), "1.5");
}

TEST(JsonIo, ExamDocumentRoundTrip) {
  const auto doc = aipat::testing::midterm_doc();
  EXPECT_EQ(doc.exam.id, "midterm");
  EXPECT_EQ(doc.exam.kind, ExamKind::midterm);
  ASSERT_EQ(doc.rubrics.size(), 1u);
  EXPECT_EQ(doc.rubrics[0].criteria.size(), 3u);
  const Json j = to_exam_document(doc);
  const auto back = parse_exam_document(j);
  EXPECT_EQ(to_exam_document(back), j);
}

TEST(JsonIo, QuestionInheritsExamId) {
  auto j = to_exam_document(aipat::testing::midterm_doc());
  j["exam"]["questions"][0].erase("exam_id");
  EXPECT_EQ(parse_exam_document(j).exam.questions[0].exam_id, "midterm");
}

TEST(JsonIo, StrictDecodingErrors) {
  auto j = to_exam_document(aipat::testing::midterm_doc());
  auto bad_kind = j;
  bad_kind["exam"]["kind"] = "homework";
  EXPECT_EQ(kind_of([&] { parse_exam_document(bad_kind); }), ErrorKind::structural);
  auto missing = j;
  missing["exam"].erase("max_total");
  EXPECT_EQ(kind_of([&] { parse_exam_document(missing); }), ErrorKind::structural);
  auto wrong_type = j;
  wrong_type["exam"]["id"] = 5;
  EXPECT_EQ(kind_of([&] { parse_exam_document(wrong_type); }), ErrorKind::structural);
  EXPECT_EQ(kind_of([] { parse_exam_document(Json::array()); }), ErrorKind::structural);
}

TEST(JsonIo, EvaluationRoundTrip) {
  Evaluation ev;
  ev.id = "midterm-s1/q1/model:m:0.7:2";
  ev.submission_id = "midterm-s1";
  ev.question_id = "q1";
  ev.grader.label = "m";
  ev.grader.temperature = Decimal::from_hundredths(70);
  ev.grader.run_index = 2;
  ev.grader.provider_id = "mock";
  ev.parsed.per_criterion = {{"c1", Tier::full, Decimal(3), "ok"}, {"c2", Tier::partial, Decimal::from_hundredths(150), "half"}};
  ev.parsed.total = Decimal::from_hundredths(450);
  ev.parsed.overall_feedback = "fine";
  ev.created_at = Timestamp{std::chrono::milliseconds{1'700'000'123'456}};
  ev.prompt_digest = "abc";
  const auto back = Json(ev).get<Evaluation>();
  EXPECT_EQ(back.id, ev.id);
  EXPECT_EQ(back.parsed, ev.parsed);
  EXPECT_EQ(back.grader.key(), ev.grader.key());
  EXPECT_EQ(back.created_at, ev.created_at);
  EXPECT_EQ(back.prompt_digest, "abc");
}

TEST(JsonIo, AppealWithProposalRoundTrip) {
  Appeal a;
  a.id = "ap-1";
  a.evaluation_id = "e";
  a.student_id = "s1";
  a.argument = "I named the cause.";
  a.state = AppealState::proposed;
  Resolution r;
  r.appeal_id = a.id;
  r.decision = AppealDecision::adjust;
  r.adjusted_per_criterion = {{"c1", Decimal(3)}};
  r.original_total = Decimal(2);
  r.new_total = Decimal(3);
  r.explanation = "fair";
  a.proposal = r;
  const auto back = Json(a).get<Appeal>();
  ASSERT_TRUE(back.proposal.has_value());
  EXPECT_EQ(back.proposal->adjusted_per_criterion, r.adjusted_per_criterion);
  EXPECT_EQ(back.proposal->new_total, Decimal(3));
  EXPECT_EQ(back.state, AppealState::proposed);
}

TEST(JsonIo, TimestampFormat) {
  const Timestamp t{std::chrono::milliseconds{1'730'799'000'000}};
  EXPECT_EQ(format_timestamp(t), "2024-11-05T09:30:00.000Z");
  EXPECT_EQ(parse_timestamp("2024-11-05T09:30:00.000Z"), t);
  EXPECT_FALSE(parse_timestamp("yesterday").has_value());
}
