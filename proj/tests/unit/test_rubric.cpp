#include <gtest/gtest.h>

#include "aipat/error.hpp"
#include "aipat/rubric.hpp"
#include "test_support.hpp"

using namespace aipat;

namespace {

Rubric rubric() { return aipat::testing::midterm_doc().rubrics.at(0); }
Question question() { return aipat::testing::midterm_doc().exam.questions.at(0); }

}  // namespace

TEST(Rubric, FixtureIsValid) {
  EXPECT_TRUE(validate_rubric(rubric(), question()).ok());
  EXPECT_TRUE(validate_exam(aipat::testing::midterm_doc().exam).ok());
}

TEST(Rubric, CriteriaMustSumToQuestionMax) {
  auto r = rubric();
  r.criteria[2].max_points = Decimal(3);
  const auto v = validate_rubric(r, question());
  EXPECT_FALSE(v.ok());
  EXPECT_TRUE(v.mentions("sum mismatch"));
}

TEST(Rubric, DuplicateIdsAndEmptyDescriptorsAreReported) {
  auto r = rubric();
  r.criteria[1].id = "c1";
  r.criteria[0].partial_descriptor.clear();
  const auto v = validate_rubric(r, question());
  EXPECT_TRUE(v.mentions("duplicate criterion id"));
  EXPECT_TRUE(v.mentions("tier descriptor must be non-empty"));
}

TEST(Rubric, NonPositiveCriterionMaxRejected) {
  auto r = rubric();
  r.criteria[0].max_points = Decimal(0);
  EXPECT_TRUE(validate_rubric(r, question()).mentions("must be > 0"));
}

TEST(Rubric, EmptyRubricRejected) {
  auto r = rubric();
  r.criteria.clear();
  EXPECT_TRUE(validate_rubric(r, question()).mentions("at least one criterion"));
}

TEST(Rubric, PenaltyAboveQuestionMaxRejected) {
  auto r = rubric();
  r.common_mistakes.push_back({"everything wrong", Decimal(9)});
  EXPECT_TRUE(validate_rubric(r, question()).mentions("exceeds question max_points"));
}

TEST(Rubric, ExamMaxTotalMustMatchQuestions) {
  auto e = aipat::testing::midterm_doc().exam;
  e.max_total = Decimal(10);
  EXPECT_TRUE(validate_exam(e).mentions("sum mismatch"));
  e = aipat::testing::midterm_doc().exam;
  e.questions.push_back(e.questions[0]);
  e.max_total = Decimal(16);
  EXPECT_TRUE(validate_exam(e).mentions("duplicate question id"));
}

TEST(Rubric, ComputeTotalNeedsEveryCriterionExactlyOnce) {
  const auto r = rubric();
  EXPECT_EQ(compute_total({{"c1", Decimal(3)}, {"c2", *Decimal::parse("1.5")}, {"c3", Decimal(0)}}, r),
            *Decimal::parse("4.5"));
  try {
    compute_total({{"c1", Decimal(3)}, {"c2", Decimal(1)}}, r);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::structural);
  }
  EXPECT_THROW(compute_total({{"c1", Decimal(3)}, {"c2", Decimal(1)}, {"c3", Decimal(0)}, {"c9", Decimal(1)}}, r), Error);
}

TEST(Rubric, NormalizeGrade) {
  EXPECT_DOUBLE_EQ(normalize_grade(6.0, 8.0), 75.0);
  EXPECT_DOUBLE_EQ(normalize_grade(Decimal(8), Decimal(8)), 100.0);
  EXPECT_DOUBLE_EQ(normalize_grade(0.0, 8.0), 0.0);
  for (double bad : {-0.5, 8.5}) {
    try {
      normalize_grade(bad, 8.0);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::range);
    }
  }
  EXPECT_THROW(normalize_grade(1.0, 0.0), Error);
}
