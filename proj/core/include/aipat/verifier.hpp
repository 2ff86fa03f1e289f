#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aipat/decimal.hpp"
#include "aipat/enum_names.hpp"
#include "aipat/gateway/chat.hpp"
#include "aipat/gateway/provider.hpp"
#include "aipat/model.hpp"
#include "aipat/store/record_store.hpp"

namespace aipat::verifier {

enum class CosmeticAction { accept, flag };
enum class SemanticAction { flag, penalize_after_confirmation };

struct IntegrityPolicy {
  CosmeticAction cosmetic_action = CosmeticAction::accept;
  SemanticAction semantic_action = SemanticAction::flag;
  // Fraction of the affected question's points withheld; only meaningful
  // with penalize_after_confirmation.
  Decimal penalty_fraction = kZero;

  static IntegrityPolicy strict();
  void validate() const;  // ErrorKind::range when the fraction is outside [0,1]
};

IntegrityAction apply_integrity_policy(const VerificationVerdict& verdict, const IntegrityPolicy& policy);

/// accept < flag_for_review < penalize_pending_confirmation
int action_rank(IntegrityAction action);

/// What the adjudicator gets to see of the handwritten original: either a
/// human reading (.txt scan) or the image itself.
struct ScanContent {
  std::optional<std::string> reading;
  std::optional<gateway::Attachment> image;
};

/// Scan references are either `blob:<sha256>.<ext>` (resolved under
/// `blob_dir`) or a plain filesystem path.
std::filesystem::path resolve_scan(const std::string& scan_ref, const std::filesystem::path& blob_dir);
ScanContent load_scan(const std::string& scan_ref, const std::filesystem::path& blob_dir);

/// Copies `source` into the blob directory under its content hash and
/// returns the `blob:` reference. Idempotent.
std::string store_blob(const std::filesystem::path& source, const std::filesystem::path& blob_dir);
std::string store_blob(std::span<const std::uint8_t> bytes, const std::string& extension,
                       const std::filesystem::path& blob_dir);

struct VerifierConfig {
  std::string model = "mock";
  Decimal temperature = kZero;
  int parse_reasks = 2;
  std::filesystem::path blob_dir;
};

gateway::ChatRequest build_verification_request(const Question& question, const ScanContent& scan,
                                                const std::string& transcription, const VerifierConfig& config);

struct VerificationOutcome {
  VerificationVerdict verdict;
  std::string prompt_text;
  std::string raw_response;
  int calls = 0;
};

/// Compares one question's scan with its transcription. Throws
/// ErrorKind::validation when the answer lacks a scan or transcription and
/// ErrorKind::unavailable when the gateway gives up or every reply fails to
/// parse.
VerificationOutcome verify_answer(const Submission& submission, const Question& question,
                                  gateway::ProviderHandle& adjudicator, const VerifierConfig& config);

inline VerificationVerdict verify_submission(const Submission& submission, const Question& question,
                                             gateway::ProviderHandle& adjudicator, const VerifierConfig& config) {
  return verify_answer(submission, question, adjudicator, config).verdict;
}

struct VerificationReport {
  std::string submission_id;
  IntegrityStatus status = IntegrityStatus::unverified;
  std::vector<IntegrityFinding> findings;
  bool manual_review = false;
  std::string error;
};

/// Verifies every answered question, aggregates worst-first and records the
/// outcome (one audit event carrying the prompts). When any question cannot
/// be adjudicated the submission stays unverified and is marked for manual
/// verification. Verifying a submission that is no longer unverified is a
/// state error.
VerificationReport verify_and_record(store::RecordStore& store, const std::string& submission_id,
                                     gateway::ProviderHandle& adjudicator, const IntegrityPolicy& policy,
                                     const VerifierConfig& config, const std::string& actor);

/// Instructor confirmation: flagged -> penalized, pending penalties become
/// confirmed.
Submission confirm_penalty(store::RecordStore& store, const std::string& submission_id, const std::string& instructor,
                           const std::string& reason);

/// Instructor review cleared the flag: flagged -> verified, pending
/// penalties dropped.
Submission clear_integrity_flag(store::RecordStore& store, const std::string& submission_id,
                                const std::string& instructor, const std::string& reason);

}  // namespace aipat::verifier

AIPAT_ENUM_NAMES(aipat::verifier::CosmeticAction, {aipat::verifier::CosmeticAction::accept, "accept"},
                 {aipat::verifier::CosmeticAction::flag, "flag"});
AIPAT_ENUM_NAMES(aipat::verifier::SemanticAction, {aipat::verifier::SemanticAction::flag, "flag"},
                 {aipat::verifier::SemanticAction::penalize_after_confirmation, "penalize_after_confirmation"});
