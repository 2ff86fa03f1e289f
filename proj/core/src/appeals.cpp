#include "aipat/appeals.hpp"

#include <cstdio>
#include <sstream>

#include "aipat/csv.hpp"
#include "aipat/error.hpp"
#include "aipat/json_io.hpp"
#include "aipat/prompt_contract.hpp"

namespace aipat::appeals {

namespace {

using gateway::ParseFailure;
using gateway::ParseFailureReason;

constexpr std::string_view kReviewerRole =
    "You review a student's appeal against an automated grade. Re-read the answer against the rubric and "
    "the original evaluation, and decide whether the appeal is justified. Only raise points a criterion's "
    "descriptors support; never lower a grade.";

struct Context {
  Appeal appeal;
  Evaluation evaluation;
  Submission submission;
  Exam exam;
  Question question;
  Rubric rubric;
};

Context load_context(const store::RecordStore& store, const std::string& appeal_id) {
  Context c;
  auto appeal = store.appeal(appeal_id);
  if (!appeal) fail(ErrorKind::not_found, "unknown appeal '" + appeal_id + "'");
  c.appeal = std::move(*appeal);
  auto ev = store.evaluation(c.appeal.evaluation_id);
  if (!ev) fail(ErrorKind::integrity, "appeal '" + appeal_id + "' refers to missing evaluation '" + c.appeal.evaluation_id + "'");
  c.evaluation = std::move(*ev);
  auto sub = store.submission(c.evaluation.submission_id);
  if (!sub) fail(ErrorKind::integrity, "evaluation '" + c.evaluation.id + "' refers to a missing submission");
  c.submission = std::move(*sub);
  auto exam = store.exam(c.submission.exam_id);
  if (!exam) fail(ErrorKind::integrity, "submission '" + c.submission.id + "' refers to a missing exam");
  c.exam = std::move(*exam);
  const Question* q = c.exam.find(c.evaluation.question_id);
  auto rubric = store.rubric(c.exam.id, c.evaluation.question_id);
  if (q == nullptr || !rubric) fail(ErrorKind::integrity, "missing question or rubric for '" + c.evaluation.question_id + "'");
  c.question = *q;
  c.rubric = std::move(*rubric);
  return c;
}

Decimal sum(const std::map<std::string, Decimal>& points) {
  Decimal total;
  for (const auto& [id, p] : points) total += p;
  return total;
}

// Applies absolute per-criterion points; returns a problem description when
// an adjustment is out of range or names an unknown criterion.
std::optional<std::string> check_adjustments(const std::map<std::string, Decimal>& adjustments, const Rubric& rubric) {
  for (const auto& [id, points] : adjustments) {
    const RubricCriterion* c = rubric.find(id);
    if (c == nullptr) return "unknown criterion '" + id + "'";
    if (points < kZero) return "criterion '" + id + "': negative points " + points.to_string();
    if (points > c->max_points) {
      return "criterion '" + id + "': points " + points.to_string() + " exceeds criterion max " + c->max_points.to_string();
    }
  }
  return std::nullopt;
}

Resolution make_resolution(const Context& c, const std::map<std::string, Decimal>& base,
                           const std::map<std::string, Decimal>& adjustments, std::string explanation,
                           GraderIdentity proposed_by) {
  Resolution r;
  r.appeal_id = c.appeal.id;
  r.original_total = sum(base);
  auto updated = base;
  for (const auto& [id, p] : adjustments) updated[id] = p;
  r.new_total = sum(updated);
  r.decision = adjustments.empty() ? AppealDecision::uphold : AppealDecision::adjust;
  r.adjusted_per_criterion = adjustments;
  r.explanation = std::move(explanation);
  r.proposed_by = std::move(proposed_by);
  return r;
}

std::string fenced(const std::string& text) {
  return std::string(prompt::kOpenFence) + "\n" + text + "\n" + std::string(prompt::kCloseFence) + "\n";
}

std::string two_places(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

}  // namespace

Appeal submit_appeal(store::RecordStore& store, const std::string& evaluation_id, const std::string& student_id,
                     const std::string& argument, const AppealPolicy& policy) {
  if (argument.find_first_not_of(" \t\r\n") == std::string::npos) {
    fail(ErrorKind::validation, "appeal argument must be non-empty");
  }
  const auto ev = store.evaluation(evaluation_id);
  if (!ev) fail(ErrorKind::not_found, "unknown evaluation '" + evaluation_id + "'");
  const auto sub = store.submission(ev->submission_id);
  if (!sub) fail(ErrorKind::integrity, "evaluation refers to a missing submission");
  if (sub->student_id != student_id) fail(ErrorKind::authorization, "evaluation belongs to another student");
  if (ev->status != EvaluationStatus::valid) fail(ErrorKind::state, "evaluation is awaiting manual review");
  const auto now = store.clock().now();
  if (now - ev->created_at > policy.window) fail(ErrorKind::state, "appeal window closed");

  Appeal a;
  a.evaluation_id = evaluation_id;
  a.student_id = student_id;
  a.argument = argument;
  a.created_at = now;
  return store.create_appeal(a, policy.max_appeals_per_evaluation,
                             {student_id, AuditAction::appeal_submitted, "", evaluation_id});
}

std::map<std::string, Decimal> current_points(const store::RecordStore& store, const Evaluation& evaluation) {
  std::map<std::string, Decimal> points;
  for (const auto& s : evaluation.parsed.per_criterion) points[s.criterion_id] = s.points;
  // Appeal ids are sequential, so map order is resolution order.
  for (const auto& a : store.appeals()) {
    if (a.evaluation_id != evaluation.id) continue;
    if (auto r = store.resolution(a.id)) {
      for (const auto& [id, p] : r->adjusted_per_criterion) points[id] = p;
    }
  }
  return points;
}

ReviewPacket review_packet(const store::RecordStore& store, const std::string& appeal_id) {
  const Context c = load_context(store, appeal_id);
  ReviewPacket p;
  p.appeal_id = c.appeal.id;
  p.evaluation_id = c.evaluation.id;
  p.system_prompt = c.exam.system_prompt.empty() ? std::string(prompt::kDefaultSystemRole) : c.exam.system_prompt;
  p.question = c.question;
  p.rubric = c.rubric;
  auto it = c.submission.answers.find(c.question.id);
  p.submission_answer = it == c.submission.answers.end() ? "" : it->second.transcription;
  p.initial_evaluation = c.evaluation.parsed;
  p.student_appeal = c.appeal.argument;
  return p;
}

ReviewPacket assemble_review_packet(store::RecordStore& store, const std::string& appeal_id, const std::string& actor) {
  const auto appeal = store.appeal(appeal_id);
  if (!appeal) fail(ErrorKind::not_found, "unknown appeal '" + appeal_id + "'");
  if (appeal->state != AppealState::submitted && appeal->state != AppealState::under_review) {
    fail(ErrorKind::state, "appeal '" + appeal_id + "' is " + std::string(enum_name(appeal->state)));
  }
  ReviewPacket p = review_packet(store, appeal_id);
  if (appeal->state == AppealState::submitted) {
    store.update_appeal(
        appeal_id, {AppealState::submitted}, [](Appeal& a) { a.state = AppealState::under_review; },
        {actor, AuditAction::appeal_review_started, appeal_id, ""});
  }
  return p;
}

std::string serialize_packet(const ReviewPacket& p) {
  std::ostringstream out;
  out << "## System Prompt\n" << fenced(p.system_prompt) << "\n";
  out << "## Question\n" << p.question.text << "\nMaximum points: " << p.question.max_points.to_string() << "\n\n";
  out << "## Grading Rubric\n";
  for (const auto& c : p.rubric.criteria) {
    out << "Criterion " << c.id << ": " << c.title << " (max " << c.max_points.to_string() << ")\n"
        << "- Full: " << c.full_descriptor << "\n"
        << "- Partial: " << c.partial_descriptor << "\n"
        << "- None: " << c.none_descriptor << "\n";
  }
  out << "\n## Student Submission\n" << fenced(p.submission_answer) << "\n";
  out << "## Initial Evaluation\n" << gateway::render_evaluation(p.initial_evaluation) << "\n\n";
  out << "## Student Appeal\n" << fenced(p.student_appeal) << "\n";
  out << "## Output Format\n"
      << prompt::kContractPrefix << prompt::kAppealSchemaVersion << "\n"
      << "Reply with one JSON object and nothing else:\n"
      << R"({"decision": "uphold" | "adjust", "adjustments": [{"criterion_id": text, "points": number}], )"
      << R"("explanation": text})"
      << "\n"
      << "Each adjustment gives the new points for that criterion. Use \"uphold\" with an empty adjustments "
         "list when the original grade stands. The explanation is shown to the student.\n";
  return out.str();
}

gateway::ParseResult<ReviewReply> parse_review_reply(std::string_view raw) {
  auto failure = [](std::string detail) { return ParseFailure{ParseFailureReason::malformed_document, std::move(detail)}; };
  try {
    const Json doc = Json::parse(gateway::strip_code_fence(raw), nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) return failure("reply is not a JSON object");
    ReviewReply r;
    if (!doc.contains("decision") || !doc.at("decision").is_string()) return failure("missing decision");
    auto decision = enum_from<AppealDecision>(doc.at("decision").get<std::string>());
    if (!decision) return failure("unknown decision '" + doc.at("decision").get<std::string>() + "'");
    r.decision = *decision;
    if (!doc.contains("explanation") || !doc.at("explanation").is_string() ||
        doc.at("explanation").get<std::string>().empty()) {
      return failure("explanation must be a non-empty string");
    }
    r.explanation = doc.at("explanation").get<std::string>();
    if (doc.contains("adjustments")) {
      const Json& adj = doc.at("adjustments");
      if (!adj.is_array()) return failure("adjustments must be an array");
      for (const auto& e : adj) {
        if (!e.is_object() || !e.contains("criterion_id") || !e.at("criterion_id").is_string() ||
            !e.contains("points") || !e.at("points").is_number()) {
          return failure("adjustment entries need criterion_id and numeric points");
        }
        const auto id = e.at("criterion_id").get<std::string>();
        const auto pts = Decimal::from_double(e.at("points").get<double>());
        if (!pts) return failure("points for '" + id + "' need at most two decimals");
        if (!r.adjustments.emplace(id, *pts).second) {
          return ParseFailure{ParseFailureReason::missing_criterion, "criterion '" + id + "' adjusted twice"};
        }
      }
    }
    if (r.decision == AppealDecision::uphold && !r.adjustments.empty()) return failure("uphold with adjustments");
    if (r.decision == AppealDecision::adjust && r.adjustments.empty()) return failure("adjust without adjustments");
    return r;
  } catch (const std::exception& e) {
    return failure(e.what());
  }
}

std::optional<Resolution> review_appeal(store::RecordStore& store, const ReviewPacket& packet,
                                        gateway::ProviderHandle& reviewer, const ReviewerConfig& config,
                                        const AppealPolicy& policy, const std::string& actor) {
  const Context c = load_context(store, packet.appeal_id);
  if (c.appeal.state != AppealState::under_review) {
    fail(ErrorKind::state, "appeal '" + packet.appeal_id + "' is " + std::string(enum_name(c.appeal.state)));
  }
  GraderIdentity identity;
  identity.kind = GraderKind::model;
  identity.label = config.label;
  identity.temperature = config.temperature;
  identity.provider_id = reviewer.id();

  gateway::ChatRequest req;
  req.system_message = std::string(kReviewerRole);
  req.user_message = serialize_packet(packet);
  req.model = config.label;
  req.temperature = config.temperature;
  const std::string base = req.user_message;

  std::optional<ReviewReply> reply;
  std::string problem;
  for (int attempt = 0; attempt <= policy.parse_reasks && !reply; ++attempt) {
    if (attempt > 0) req.user_message = base + std::string(prompt::kCorrectiveSuffix);
    gateway::ChatResponse resp;
    try {
      resp = reviewer.complete(req);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::retries_exhausted || e.kind() == ErrorKind::provider_auth ||
          e.kind() == ErrorKind::validation) {
        fail(ErrorKind::unavailable, "appeal review unavailable: " + std::string(e.what()));
      }
      throw;
    }
    auto parsed = parse_review_reply(resp.raw_text);
    if (auto* r = std::get_if<ReviewReply>(&parsed)) {
      reply = std::move(*r);
    } else {
      problem = "unparseable reply: " + std::get<ParseFailure>(parsed).detail;
    }
  }

  const auto base_points = current_points(store, c.evaluation);
  if (reply) {
    if (auto bad = check_adjustments(reply->adjustments, c.rubric)) {
      problem = "proposal rejected: " + *bad;
      reply.reset();
    } else {
      for (const auto& [id, p] : reply->adjustments) {
        if (p < base_points.at(id)) {
          problem = "proposal rejected: criterion '" + id + "' would decrease";
          reply.reset();
          break;
        }
      }
    }
  }

  if (!reply) {
    store.update_appeal(
        packet.appeal_id, {AppealState::under_review},
        [&](Appeal& a) {
          a.needs_manual = true;
          a.manual_reason = problem;
        },
        {actor, AuditAction::appeal_flagged_manual, packet.appeal_id, problem});
    return std::nullopt;
  }

  Resolution proposal = make_resolution(c, base_points, reply->adjustments, reply->explanation, identity);
  store.update_appeal(
      packet.appeal_id, {AppealState::under_review},
      [&](Appeal& a) {
        a.state = AppealState::proposed;
        a.proposal = proposal;
      },
      {actor, AuditAction::appeal_proposed, packet.appeal_id, Json(proposal).dump()});
  return proposal;
}

Resolution propose_manual(store::RecordStore& store, const std::string& appeal_id, const std::string& instructor,
                          const std::map<std::string, Decimal>& adjustments, const std::string& explanation) {
  if (instructor.empty()) fail(ErrorKind::authorization, "manual proposals need a named instructor");
  if (explanation.empty()) fail(ErrorKind::validation, "explanation must be non-empty");
  const Context c = load_context(store, appeal_id);
  if (auto bad = check_adjustments(adjustments, c.rubric)) fail(ErrorKind::range, *bad);
  GraderIdentity identity;
  identity.kind = GraderKind::human;
  identity.label = instructor;
  Resolution proposal = make_resolution(c, current_points(store, c.evaluation), adjustments, explanation, identity);
  store.update_appeal(
      appeal_id, {AppealState::under_review},
      [&](Appeal& a) {
        a.state = AppealState::proposed;
        a.proposal = proposal;
        a.needs_manual = false;
      },
      {instructor, AuditAction::appeal_proposed, appeal_id, Json(proposal).dump()});
  return proposal;
}

std::optional<Resolution> finalize_resolution(store::RecordStore& store, const std::string& appeal_id,
                                              const ReviewerDecision& decision, const std::string& confirmer) {
  if (confirmer.empty()) fail(ErrorKind::validation, "finalizing an appeal requires a confirmer");
  const Context c = load_context(store, appeal_id);
  if (c.appeal.state != AppealState::proposed) {
    fail(ErrorKind::state, "appeal '" + appeal_id + "' is " + std::string(enum_name(c.appeal.state)));
  }
  if (!c.appeal.proposal) fail(ErrorKind::integrity, "proposed appeal without a proposal");

  if (decision.action == ReviewerAction::reject_to_manual) {
    const std::string reason = decision.explanation.empty() ? "rejected by " + confirmer : decision.explanation;
    store.update_appeal(
        appeal_id, {AppealState::proposed},
        [&](Appeal& a) {
          a.needs_manual = true;
          a.manual_reason = reason;
        },
        {confirmer, AuditAction::appeal_flagged_manual, appeal_id, reason});
    return std::nullopt;
  }

  const auto base = current_points(store, c.evaluation);
  Resolution r;
  if (decision.action == ReviewerAction::accept) {
    if (c.appeal.needs_manual) fail(ErrorKind::state, "appeal needs manual resolution; use override");
    r = *c.appeal.proposal;
    // Recompute against the ledger as it stands now.
    r = make_resolution(c, base, r.adjusted_per_criterion, r.explanation, r.proposed_by);
  } else {
    if (auto bad = check_adjustments(decision.adjustments, c.rubric)) fail(ErrorKind::range, *bad);
    const std::string explanation = decision.explanation.empty() ? c.appeal.proposal->explanation : decision.explanation;
    r = make_resolution(c, base, decision.adjustments, explanation, c.appeal.proposal->proposed_by);
    r.overridden = true;
  }
  r.confirmed_by = confirmer;
  if (r.new_total < kZero || r.new_total > c.question.max_points) {
    fail(ErrorKind::range, "resolved total " + r.new_total.to_string() + " outside [0, " +
                               c.question.max_points.to_string() + "]");
  }

  GradeAdjustment adj;
  adj.id = "adj-" + appeal_id;
  adj.evaluation_id = c.evaluation.id;
  adj.student_id = c.appeal.student_id;
  adj.appeal_id = appeal_id;
  adj.delta = r.new_total - r.original_total;
  adj.at = store.clock().now();
  const AppealState target = r.new_total != r.original_total ? AppealState::resolved_changed
                                                              : AppealState::resolved_unchanged;
  store.finalize_appeal(appeal_id, r, adj, target,
                        {confirmer, AuditAction::appeal_resolved, appeal_id,
                         Json{{"action", enum_name(decision.action)}, {"delta", adj.delta}}.dump()});
  return r;
}

Appeal publish_resolution(store::RecordStore& store, const std::string& appeal_id, const std::string& actor) {
  if (actor.empty()) fail(ErrorKind::validation, "publishing requires an actor");
  return store.update_appeal(
      appeal_id, {AppealState::resolved_changed, AppealState::resolved_unchanged},
      [](Appeal& a) { a.state = AppealState::published; }, {actor, AuditAction::appeal_published, appeal_id, ""});
}

std::string export_appeals_csv(const store::RecordStore& store, const std::string& exam_id) {
  csv::Writer w;
  w.row({"appeal_id", "exam_kind", "original_total", "new_total", "decision", "normalized_original", "normalized_new"});
  for (const auto& r : store.resolutions()) {
    Context c;
    try {
      c = load_context(store, r.appeal_id);
    } catch (const Error&) {
      continue;
    }
    if (!exam_id.empty() && c.exam.id != exam_id) continue;
    const double max = c.question.max_points.to_double();
    w.row({r.appeal_id, std::string(enum_name(c.exam.kind)), r.original_total.to_string(), r.new_total.to_string(),
           std::string(enum_name(r.decision)), two_places(100.0 * r.original_total.to_double() / max),
           two_places(100.0 * r.new_total.to_double() / max)});
  }
  return w.str();
}

}  // namespace aipat::appeals
