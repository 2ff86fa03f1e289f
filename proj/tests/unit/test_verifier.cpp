#include <gtest/gtest.h>

#include <functional>

#include "aipat/error.hpp"
#include "aipat/gateway/mock_provider.hpp"
#include "aipat/verifier.hpp"
#include "test_support.hpp"

using namespace aipat;
using namespace aipat::verifier;
using aipat::testing::TempDir;

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
  TempDir dir;
  ManualClock clock;
  std::unique_ptr<store::RecordStore> st = store::RecordStore::open(dir / "data", clock);
  std::shared_ptr<gateway::MockProvider> mock = std::make_shared<gateway::MockProvider>();
  gateway::ProviderHandle handle{mock, gateway::ProviderPolicy{600, 1, std::chrono::milliseconds{10}, 2.0,
                                                               std::chrono::milliseconds{100}},
                                 clock};

  Fixture() { st->register_exam(aipat::testing::midterm_doc(), aipat::testing::note(AuditAction::exam_registered)); }

  std::string add(const std::string& student, const std::string& typed, const std::string& reading) {
    const auto ref = store_blob(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(reading.data()),
                                                             reading.size()),
                                "txt", st->blob_dir());
    auto sub = aipat::testing::make_submission("midterm", student, typed, ref);
    st->upsert_submission(sub, aipat::testing::note(AuditAction::submission_ingested));
    return sub.id;
  }

  VerificationReport verify(const std::string& id, const IntegrityPolicy& policy = {}) {
    return verify_and_record(*st, id, handle, policy, {}, "verifier");
  }
};

VerificationVerdict verdict(Verdict v, std::initializer_list<Severity> severities = {}) {
  VerificationVerdict out;
  out.verdict = v;
  for (auto s : severities) out.discrepancies.push_back({"q1", "a", "b", s});
  return out;
}

}  // namespace

TEST(IntegrityPolicy, DecisionTable) {
  IntegrityPolicy lenient;
  EXPECT_EQ(apply_integrity_policy(verdict(Verdict::match), lenient), IntegrityAction::accept);
  EXPECT_EQ(apply_integrity_policy(verdict(Verdict::unreadable), lenient), IntegrityAction::flag_for_review);
  EXPECT_EQ(apply_integrity_policy(verdict(Verdict::mismatch, {Severity::cosmetic}), lenient), IntegrityAction::accept);
  EXPECT_EQ(apply_integrity_policy(verdict(Verdict::mismatch, {Severity::cosmetic, Severity::semantic}), lenient),
            IntegrityAction::flag_for_review);
  const auto strict = IntegrityPolicy::strict();
  EXPECT_EQ(apply_integrity_policy(verdict(Verdict::mismatch, {Severity::cosmetic}), strict), IntegrityAction::accept);
  IntegrityPolicy picky;
  picky.cosmetic_action = CosmeticAction::flag;
  EXPECT_EQ(apply_integrity_policy(verdict(Verdict::mismatch, {Severity::cosmetic}), picky),
            IntegrityAction::flag_for_review);
  EXPECT_EQ(apply_integrity_policy(verdict(Verdict::mismatch, {Severity::semantic}), strict),
            IntegrityAction::penalize_pending_confirmation);
  IntegrityPolicy bad;
  bad.penalty_fraction = Decimal::from_hundredths(150);
  EXPECT_EQ(kind_of([&] { bad.validate(); }), ErrorKind::range);
}

TEST(Blobs, ContentAddressedAndIdempotent) {
  TempDir dir;
  const std::string text = "hello";
  const std::span<const std::uint8_t> bytes(reinterpret_cast<const std::uint8_t*>(text.data()), text.size());
  const auto a = store_blob(bytes, "TXT", dir.path());
  const auto b = store_blob(bytes, ".txt", dir.path());
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, "blob:2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824.txt");
  EXPECT_EQ(load_scan(a, dir.path()).reading, "hello");
  EXPECT_EQ(kind_of([&] { store_blob(bytes, "../x", dir.path()); }), ErrorKind::validation);
  EXPECT_EQ(kind_of([&] { resolve_scan("blob:../etc/passwd", dir.path()); }), ErrorKind::validation);
}

TEST(Blobs, ImagesBecomeAttachments) {
  TempDir dir;
  const std::vector<std::uint8_t> png{0x89, 'P', 'N', 'G'};
  const auto ref = store_blob(std::span<const std::uint8_t>(png), "png", dir.path());
  const auto scan = load_scan(ref, dir.path());
  ASSERT_TRUE(scan.image.has_value());
  EXPECT_EQ(scan.image->media_type, "image/png");
  EXPECT_EQ(scan.image->bytes, png);
  EXPECT_FALSE(scan.reading.has_value());
}

TEST(Verifier, MatchingTranscriptionIsVerified) {
  Fixture f;
  const auto id = f.add("s1", "pass by reference", "pass by reference");
  const auto report = f.verify(id);
  EXPECT_EQ(report.status, IntegrityStatus::verified);
  EXPECT_EQ(f.st->submission(id)->integrity_status, IntegrityStatus::verified);
  EXPECT_EQ(f.st->audit_events().back().action, AuditAction::verification_recorded);
  EXPECT_NE(f.st->audit_events().back().detail.find("raw_response"), std::string::npos);
  EXPECT_EQ(kind_of([&] { f.verify(id); }), ErrorKind::state);
}

TEST(Verifier, SemanticMismatchFlagsAndCosmeticPasses) {
  Fixture f;
  const auto semantic = f.add("s1", "MyClass(MyClass o)", "MyClass(const MyClass& o)");
  const auto cosmetic = f.add("s2", "MyClass(const MyClass&o)", "MyClass(const MyClass& o)");
  const auto r1 = f.verify(semantic);
  EXPECT_EQ(r1.status, IntegrityStatus::flagged);
  ASSERT_EQ(r1.findings.size(), 1u);
  EXPECT_EQ(r1.findings[0].verdict.discrepancies[0].severity, Severity::semantic);
  EXPECT_EQ(f.verify(cosmetic).status, IntegrityStatus::verified);
}

TEST(Verifier, PenaltyNeedsInstructorConfirmation) {
  Fixture f;
  IntegrityPolicy policy = IntegrityPolicy::strict();
  policy.penalty_fraction = Decimal::from_hundredths(50);
  const auto id = f.add("s1", "wrong", "right");
  EXPECT_EQ(f.verify(id, policy).status, IntegrityStatus::flagged);
  auto sub = *f.st->submission(id);
  EXPECT_EQ(sub.pending_penalties.at("q1"), Decimal::from_hundredths(50));
  EXPECT_TRUE(sub.confirmed_penalties.empty());
  EXPECT_EQ(kind_of([&] { confirm_penalty(*f.st, id, "", "x"); }), ErrorKind::authorization);
  sub = confirm_penalty(*f.st, id, "prof", "copied from a neighbour");
  EXPECT_EQ(sub.integrity_status, IntegrityStatus::penalized);
  EXPECT_EQ(sub.confirmed_penalties.at("q1"), Decimal::from_hundredths(50));
  EXPECT_EQ(f.st->audit_events().back().actor, "prof");
}

TEST(Verifier, ClearingAFlagVerifies) {
  Fixture f;
  const auto id = f.add("s1", "typed", "[ILLEGIBLE]");
  EXPECT_EQ(f.verify(id).status, IntegrityStatus::flagged);
  const auto sub = clear_integrity_flag(*f.st, id, "prof", "checked the paper");
  EXPECT_EQ(sub.integrity_status, IntegrityStatus::verified);
  EXPECT_EQ(kind_of([&] { clear_integrity_flag(*f.st, id, "prof", "again"); }), ErrorKind::state);
}

TEST(Verifier, UnavailableVerdictGoesToManualReview) {
  Fixture f;
  const auto id = f.add("s1", "a", "a");
  f.mock->script_when([](const gateway::ChatRequest&) { return true; }, {gateway::MockOutcome::timeout()});
  const auto report = f.verify(id);
  EXPECT_TRUE(report.manual_review);
  const auto sub = *f.st->submission(id);
  EXPECT_EQ(sub.integrity_status, IntegrityStatus::unverified);
  EXPECT_TRUE(sub.manual_verification);
  EXPECT_EQ(f.st->audit_events().back().action, AuditAction::verification_unavailable);
}

TEST(Verifier, UnparseableRepliesAreReaskedThenManual) {
  Fixture f;
  const auto id = f.add("s1", "a", "a");
  f.mock->script_when([](const gateway::ChatRequest&) { return true; },
                      {gateway::MockOutcome::reply("nope"), gateway::MockOutcome::reply(R"({"verdict":"match","discrepancies":[]})")});
  EXPECT_EQ(f.verify(id).status, IntegrityStatus::verified);
  const auto history = f.mock->history();
  ASSERT_EQ(history.size(), 2u);
  EXPECT_NE(history[1].user_message.find("not valid"), std::string::npos);
}

TEST(Verifier, MissingScanIsManual) {
  Fixture f;
  auto sub = aipat::testing::make_submission("midterm", "s9", "typed only");
  f.st->upsert_submission(sub, aipat::testing::note(AuditAction::submission_ingested));
  EXPECT_TRUE(f.verify(sub.id).manual_review);
  EXPECT_EQ(f.mock->call_count(), 0);
}
