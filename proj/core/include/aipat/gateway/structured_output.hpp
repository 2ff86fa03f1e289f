#pragma once

#include <string>
#include <string_view>
#include <variant>

#include "aipat/enum_names.hpp"
#include "aipat/model.hpp"

namespace aipat::gateway {

enum class ParseFailureReason {
  malformed_document,
  missing_criterion,
  tier_point_inconsistency,
  total_mismatch,
  mismatch_without_evidence,
  match_with_discrepancies,
};

struct ParseFailure {
  ParseFailureReason reason = ParseFailureReason::malformed_document;
  std::string detail;
};

template <typename T>
using ParseResult = std::variant<T, ParseFailure>;

template <typename T>
bool parsed_ok(const ParseResult<T>& r) {
  return std::holds_alternative<T>(r);
}

/// Wire schema (one strict JSON object, optionally inside a ```json fence):
///   {"criteria": [{"criterion_id": str, "tier": "full"|"partial"|"none",
///                  "points": number, "justification": str}, ...],
///    "overall_feedback": str, "total": number}
/// Every rubric criterion must appear exactly once; full = max, none = 0,
/// partial strictly between; total = sum of points. Never throws.
ParseResult<ParsedEvaluation> parse_evaluation(std::string_view raw_text, const Rubric& rubric);

/// Wire schema:
///   {"verdict": "match"|"mismatch"|"unreadable", "confidence": number in [0,1],
///    "discrepancies": [{"question_id": str, "handwritten_excerpt": str,
///                       "typed_excerpt": str, "severity": "cosmetic"|"semantic"}]}
/// Never throws.
ParseResult<VerificationVerdict> parse_verdict(std::string_view raw_text);

/// Canonical wire rendering; parse_evaluation(render_evaluation(e), r) == e
/// for every valid e.
std::string render_evaluation(const ParsedEvaluation& evaluation);
std::string render_verdict(const VerificationVerdict& verdict);

/// Trims whitespace and a surrounding markdown code fence.
std::string_view strip_code_fence(std::string_view text);

}  // namespace aipat::gateway

AIPAT_ENUM_NAMES(aipat::gateway::ParseFailureReason,
                 {aipat::gateway::ParseFailureReason::malformed_document, "malformed-document"},
                 {aipat::gateway::ParseFailureReason::missing_criterion, "missing-criterion"},
                 {aipat::gateway::ParseFailureReason::tier_point_inconsistency, "tier-point-inconsistency"},
                 {aipat::gateway::ParseFailureReason::total_mismatch, "total-mismatch"},
                 {aipat::gateway::ParseFailureReason::mismatch_without_evidence, "mismatch-without-evidence"},
                 {aipat::gateway::ParseFailureReason::match_with_discrepancies, "match-with-discrepancies"});
