#pragma once

#include <chrono>
#include <map>
#include <optional>
#include <string>

#include "aipat/gateway/provider.hpp"
#include "aipat/gateway/structured_output.hpp"
#include "aipat/model.hpp"
#include "aipat/store/record_store.hpp"

namespace aipat::appeals {

struct AppealPolicy {
  std::chrono::hours window{24 * 14};
  int max_appeals_per_evaluation = 1;
  int parse_reasks = 2;
};

/// Ownership (authorization), window (state), one appeal per evaluation
/// (conflict). Only valid evaluations can be appealed.
Appeal submit_appeal(store::RecordStore& store, const std::string& evaluation_id, const std::string& student_id,
                     const std::string& argument, const AppealPolicy& policy = {});

struct ReviewPacket {
  std::string appeal_id;
  std::string evaluation_id;
  std::string system_prompt;
  Question question;
  Rubric rubric;
  std::string submission_answer;
  ParsedEvaluation initial_evaluation;
  std::string student_appeal;
};

/// The packet for an appeal in any state; changes nothing.
ReviewPacket review_packet(const store::RecordStore& store, const std::string& appeal_id);

/// Builds the packet from stored records only. submitted -> under_review on
/// first call; later calls return the same packet and change nothing. A
/// purged evaluation is an integrity error.
ReviewPacket assemble_review_packet(store::RecordStore& store, const std::string& appeal_id,
                                    const std::string& actor = "appeals");

/// Reviewer prompt: system prompt, question, rubric, submission, initial
/// evaluation, appeal, then the reply contract.
std::string serialize_packet(const ReviewPacket& packet);

/// Reviewer reply: {"decision": "uphold"|"adjust",
///                  "adjustments": [{"criterion_id": str, "points": number}],
///                  "explanation": str}
/// Points are the new absolute points for that criterion.
struct ReviewReply {
  AppealDecision decision = AppealDecision::uphold;
  std::map<std::string, Decimal> adjustments;
  std::string explanation;
};
gateway::ParseResult<ReviewReply> parse_review_reply(std::string_view raw);

struct ReviewerConfig {
  // Kept apart from the grading models by default.
  std::string label = "appeal-reviewer";
  Decimal temperature = kZero;
};

/// Asks the reviewer model for a proposal and moves the appeal to proposed.
/// A reply that cannot be parsed after re-asks, raises a criterion above its
/// max or lowers a grade flags the appeal for manual resolution instead and
/// returns nullopt. Gateway exhaustion leaves the appeal under review and
/// throws ErrorKind::unavailable.
std::optional<Resolution> review_appeal(store::RecordStore& store, const ReviewPacket& packet,
                                        gateway::ProviderHandle& reviewer, const ReviewerConfig& config = {},
                                        const AppealPolicy& policy = {}, const std::string& actor = "appeals");

/// Instructor-authored proposal for appeals the model could not handle.
/// under_review -> proposed. Decreases are allowed here.
Resolution propose_manual(store::RecordStore& store, const std::string& appeal_id, const std::string& instructor,
                          const std::map<std::string, Decimal>& adjustments, const std::string& explanation);

struct ReviewerDecision {
  ReviewerAction action = ReviewerAction::accept;
  std::map<std::string, Decimal> adjustments;  // override only
  std::string explanation;                     // override / reject reason
};

/// Human confirmation. accept and override resolve the appeal and append a
/// ledger entry; reject_to_manual keeps it proposed, marks it for manual
/// handling and returns nullopt.
std::optional<Resolution> finalize_resolution(store::RecordStore& store, const std::string& appeal_id,
                                              const ReviewerDecision& decision, const std::string& confirmer);

/// resolved_* -> published; releases the explanation to the student.
Appeal publish_resolution(store::RecordStore& store, const std::string& appeal_id, const std::string& actor);

/// Criterion points after every earlier finalized appeal on the evaluation.
std::map<std::string, Decimal> current_points(const store::RecordStore& store, const Evaluation& evaluation);

/// appeal_id,exam_kind,original_total,new_total,decision,normalized_original,normalized_new
/// One row per resolved or published appeal; normalization is 100 * total /
/// question max.
std::string export_appeals_csv(const store::RecordStore& store, const std::string& exam_id = "");

}  // namespace aipat::appeals
