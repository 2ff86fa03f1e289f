#include "aipat/gateway/structured_output.hpp"

#include <nlohmann/json.hpp>

#include <set>

#include "aipat/json_io.hpp"

namespace aipat::gateway {

namespace {

using Json = nlohmann::json;

constexpr std::string_view kWhitespace = " \t\r\n";

ParseFailure failure(ParseFailureReason reason, std::string detail) { return {reason, std::move(detail)}; }

std::optional<Decimal> json_decimal(const Json& v) {
  if (v.is_number_integer()) {
    if (v.is_number_unsigned()) {
      const auto u = v.get<std::uint64_t>();
      if (u > 10'000'000'000'000ULL) return std::nullopt;
      return Decimal::from_hundredths(static_cast<std::int64_t>(u) * Decimal::kScale);
    }
    const auto i = v.get<std::int64_t>();
    if (i > 10'000'000'000'000LL || i < -10'000'000'000'000LL) return std::nullopt;
    return Decimal::from_hundredths(i * Decimal::kScale);
  }
  if (v.is_number_float()) return Decimal::from_double(v.get<double>());
  return std::nullopt;
}

const Json* member(const Json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

std::optional<Json> parse_object(std::string_view raw) {
  const std::string_view body = strip_code_fence(raw);
  Json doc = Json::parse(body.begin(), body.end(), nullptr, /*allow_exceptions=*/false);
  if (doc.is_discarded() || !doc.is_object()) return std::nullopt;
  return doc;
}

ParseResult<ParsedEvaluation> parse_evaluation_impl(std::string_view raw_text, const Rubric& rubric) {
  auto doc = parse_object(raw_text);
  if (!doc) return failure(ParseFailureReason::malformed_document, "reply is not a single JSON object");

  const Json* criteria = member(*doc, "criteria");
  const Json* total = member(*doc, "total");
  const Json* feedback = member(*doc, "overall_feedback");
  if (criteria == nullptr || !criteria->is_array()) {
    return failure(ParseFailureReason::malformed_document, "'criteria' must be an array");
  }
  if (total == nullptr) return failure(ParseFailureReason::malformed_document, "missing 'total'");
  if (feedback == nullptr || !feedback->is_string()) {
    return failure(ParseFailureReason::malformed_document, "'overall_feedback' must be a string");
  }
  auto stated_total = json_decimal(*total);
  if (!stated_total) return failure(ParseFailureReason::malformed_document, "'total' is not a 2-decimal number");

  ParsedEvaluation out;
  out.overall_feedback = feedback->get<std::string>();
  for (const auto& entry : *criteria) {
    if (!entry.is_object()) return failure(ParseFailureReason::malformed_document, "criterion entry is not an object");
    const Json* id = member(entry, "criterion_id");
    const Json* tier = member(entry, "tier");
    const Json* points = member(entry, "points");
    const Json* justification = member(entry, "justification");
    if (id == nullptr || !id->is_string() || tier == nullptr || !tier->is_string() || points == nullptr ||
        justification == nullptr || !justification->is_string()) {
      return failure(ParseFailureReason::malformed_document,
                     "criterion entry needs string criterion_id, tier, justification and numeric points");
    }
    auto tier_value = enum_from<Tier>(tier->get<std::string>());
    if (!tier_value) return failure(ParseFailureReason::malformed_document, "unknown tier '" + tier->get<std::string>() + "'");
    auto pts = json_decimal(*points);
    if (!pts) return failure(ParseFailureReason::malformed_document, "points is not a 2-decimal number");
    out.per_criterion.push_back({id->get<std::string>(), *tier_value, *pts, justification->get<std::string>()});
  }

  std::set<std::string> seen;
  for (const auto& score : out.per_criterion) {
    if (rubric.find(score.criterion_id) == nullptr) {
      return failure(ParseFailureReason::missing_criterion, "unknown criterion '" + score.criterion_id + "'");
    }
    if (!seen.insert(score.criterion_id).second) {
      return failure(ParseFailureReason::missing_criterion, "criterion '" + score.criterion_id + "' appears twice");
    }
  }
  for (const auto& c : rubric.criteria) {
    if (seen.count(c.id) == 0) return failure(ParseFailureReason::missing_criterion, "criterion '" + c.id + "' missing");
  }

  Decimal sum;
  for (const auto& score : out.per_criterion) {
    const Decimal max = rubric.find(score.criterion_id)->max_points;
    const bool consistent = (score.tier == Tier::full && score.points == max) ||
                            (score.tier == Tier::none && score.points == kZero) ||
                            (score.tier == Tier::partial && score.points > kZero && score.points < max);
    if (!consistent) {
      return failure(ParseFailureReason::tier_point_inconsistency,
                     "criterion '" + score.criterion_id + "': tier " + std::string(enum_name(score.tier)) +
                         " with " + score.points.to_string() + " of " + max.to_string() + " points");
    }
    sum += score.points;
  }
  if (sum != *stated_total) {
    return failure(ParseFailureReason::total_mismatch,
                   "criteria sum to " + sum.to_string() + " but total is " + stated_total->to_string());
  }
  out.total = sum;
  return out;
}

ParseResult<VerificationVerdict> parse_verdict_impl(std::string_view raw_text) {
  auto doc = parse_object(raw_text);
  if (!doc) return failure(ParseFailureReason::malformed_document, "reply is not a single JSON object");

  const Json* verdict = member(*doc, "verdict");
  const Json* discrepancies = member(*doc, "discrepancies");
  const Json* confidence = member(*doc, "confidence");
  if (verdict == nullptr || !verdict->is_string()) {
    return failure(ParseFailureReason::malformed_document, "'verdict' must be a string");
  }
  if (discrepancies == nullptr || !discrepancies->is_array()) {
    return failure(ParseFailureReason::malformed_document, "'discrepancies' must be an array");
  }
  VerificationVerdict out;
  auto v = enum_from<Verdict>(verdict->get<std::string>());
  if (!v) return failure(ParseFailureReason::malformed_document, "unknown verdict '" + verdict->get<std::string>() + "'");
  out.verdict = *v;
  if (confidence != nullptr) {
    if (!confidence->is_number()) return failure(ParseFailureReason::malformed_document, "'confidence' must be a number");
    out.confidence = confidence->get<double>();
    if (!(out.confidence >= 0.0 && out.confidence <= 1.0)) {
      return failure(ParseFailureReason::malformed_document, "'confidence' must lie in [0,1]");
    }
  }
  for (const auto& entry : *discrepancies) {
    if (!entry.is_object()) return failure(ParseFailureReason::malformed_document, "discrepancy is not an object");
    const Json* hw = member(entry, "handwritten_excerpt");
    const Json* typed = member(entry, "typed_excerpt");
    const Json* severity = member(entry, "severity");
    const Json* qid = member(entry, "question_id");
    if (hw == nullptr || !hw->is_string() || typed == nullptr || !typed->is_string() || severity == nullptr ||
        !severity->is_string() || (qid != nullptr && !qid->is_string())) {
      return failure(ParseFailureReason::malformed_document, "discrepancy fields have the wrong shape");
    }
    auto sev = enum_from<Severity>(severity->get<std::string>());
    if (!sev) return failure(ParseFailureReason::malformed_document, "unknown severity");
    Discrepancy d{qid != nullptr ? qid->get<std::string>() : "", hw->get<std::string>(), typed->get<std::string>(), *sev};
    if (d.handwritten_excerpt.empty() || d.typed_excerpt.empty()) {
      return failure(ParseFailureReason::malformed_document, "discrepancy excerpts must be non-empty");
    }
    out.discrepancies.push_back(std::move(d));
  }
  if (out.verdict == Verdict::mismatch && out.discrepancies.empty()) {
    return failure(ParseFailureReason::mismatch_without_evidence, "mismatch verdict lists no discrepancies");
  }
  if (out.verdict == Verdict::match && !out.discrepancies.empty()) {
    return failure(ParseFailureReason::match_with_discrepancies, "match verdict lists discrepancies");
  }
  return out;
}

}  // namespace

std::string_view strip_code_fence(std::string_view text) {
  auto trim = [](std::string_view s) {
    const auto b = s.find_first_not_of(kWhitespace);
    if (b == std::string_view::npos) return std::string_view{};
    const auto e = s.find_last_not_of(kWhitespace);
    return s.substr(b, e - b + 1);
  };
  std::string_view s = trim(text);
  if (s.size() >= 6 && s.substr(0, 3) == "```" && s.substr(s.size() - 3) == "```") {
    const auto first_newline = s.find('\n');
    if (first_newline == std::string_view::npos || first_newline > s.size() - 3) return s;
    s = trim(s.substr(first_newline + 1, s.size() - 3 - (first_newline + 1)));
  }
  return s;
}

ParseResult<ParsedEvaluation> parse_evaluation(std::string_view raw_text, const Rubric& rubric) {
  try {
    return parse_evaluation_impl(raw_text, rubric);
  } catch (const std::exception& e) {
    return failure(ParseFailureReason::malformed_document, e.what());
  }
}

ParseResult<VerificationVerdict> parse_verdict(std::string_view raw_text) {
  try {
    return parse_verdict_impl(raw_text);
  } catch (const std::exception& e) {
    return failure(ParseFailureReason::malformed_document, e.what());
  }
}

std::string render_evaluation(const ParsedEvaluation& evaluation) {
  Json criteria = Json::array();
  for (const auto& c : evaluation.per_criterion) {
    criteria.push_back(Json{{"criterion_id", c.criterion_id},
                            {"tier", std::string(enum_name(c.tier))},
                            {"points", c.points},
                            {"justification", c.justification}});
  }
  return Json{{"criteria", criteria}, {"overall_feedback", evaluation.overall_feedback}, {"total", evaluation.total}}
      .dump(-1, ' ', false, Json::error_handler_t::replace);
}

std::string render_verdict(const VerificationVerdict& verdict) { return Json(verdict).dump(-1, ' ', false, Json::error_handler_t::replace); }

}  // namespace aipat::gateway
