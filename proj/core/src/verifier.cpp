#include "aipat/verifier.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "aipat/digest.hpp"
#include "aipat/error.hpp"
#include "aipat/gateway/structured_output.hpp"
#include "aipat/json_io.hpp"
#include "aipat/prompt_contract.hpp"

namespace aipat::verifier {

namespace {

constexpr std::string_view kBlobPrefix = "blob:";

constexpr std::string_view kVerifierRole =
    "You check whether a typed transcription reproduces a student's handwritten exam answer exactly. "
    "Classify every difference as cosmetic (layout, whitespace, an obvious slip that does not change "
    "meaning) or semantic (anything that changes what the code or the answer says).";

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot read scan " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string lower_extension(const std::filesystem::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

std::optional<std::string> image_media_type(const std::string& ext) {
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  return std::nullopt;
}

std::string fenced(const std::string& text) {
  return std::string(prompt::kOpenFence) + "\n" + text + "\n" + std::string(prompt::kCloseFence) + "\n";
}

bool gateway_gave_up(ErrorKind k) {
  return k == ErrorKind::retries_exhausted || k == ErrorKind::provider_auth || k == ErrorKind::unavailable ||
         k == ErrorKind::validation;
}

}  // namespace

IntegrityPolicy IntegrityPolicy::strict() {
  IntegrityPolicy p;
  p.semantic_action = SemanticAction::penalize_after_confirmation;
  p.penalty_fraction = Decimal(1);
  return p;
}

void IntegrityPolicy::validate() const {
  if (penalty_fraction < kZero || penalty_fraction > Decimal(1)) {
    fail(ErrorKind::range, "penalty_fraction must lie in [0,1], got " + penalty_fraction.to_string());
  }
}

IntegrityAction apply_integrity_policy(const VerificationVerdict& verdict, const IntegrityPolicy& policy) {
  switch (verdict.verdict) {
    case Verdict::match: return IntegrityAction::accept;
    case Verdict::unreadable: return IntegrityAction::flag_for_review;
    case Verdict::mismatch: break;
  }
  const bool semantic = std::any_of(verdict.discrepancies.begin(), verdict.discrepancies.end(),
                                    [](const Discrepancy& d) { return d.severity == Severity::semantic; });
  if (semantic) {
    return policy.semantic_action == SemanticAction::flag ? IntegrityAction::flag_for_review
                                                          : IntegrityAction::penalize_pending_confirmation;
  }
  return policy.cosmetic_action == CosmeticAction::accept ? IntegrityAction::accept
                                                          : IntegrityAction::flag_for_review;
}

int action_rank(IntegrityAction action) {
  switch (action) {
    case IntegrityAction::accept: return 0;
    case IntegrityAction::flag_for_review: return 1;
    case IntegrityAction::penalize_pending_confirmation: return 2;
  }
  return 0;
}

std::filesystem::path resolve_scan(const std::string& scan_ref, const std::filesystem::path& blob_dir) {
  if (scan_ref.rfind(kBlobPrefix, 0) == 0) {
    const std::string name = scan_ref.substr(kBlobPrefix.size());
    if (name.empty() || name.find('/') != std::string::npos || name.find("..") != std::string::npos) {
      fail(ErrorKind::validation, "malformed blob reference '" + scan_ref + "'");
    }
    if (blob_dir.empty()) fail(ErrorKind::validation, "blob reference without a blob directory");
    return blob_dir / name;
  }
  return scan_ref;
}

ScanContent load_scan(const std::string& scan_ref, const std::filesystem::path& blob_dir) {
  const auto path = resolve_scan(scan_ref, blob_dir);
  const std::string ext = lower_extension(path);
  ScanContent scan;
  auto bytes = read_bytes(path);
  if (ext == ".txt") {
    std::string text(bytes.begin(), bytes.end());
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    scan.reading = std::move(text);
  } else if (auto media = image_media_type(ext)) {
    scan.image = gateway::Attachment{*media, std::move(bytes)};
  } else {
    fail(ErrorKind::validation, "unsupported scan type '" + ext + "' for " + path.string());
  }
  return scan;
}

std::string store_blob(std::span<const std::uint8_t> bytes, const std::string& extension,
                       const std::filesystem::path& blob_dir) {
  std::string ext = extension;
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (!ext.empty() && ext.front() != '.') ext.insert(ext.begin(), '.');
  if (ext.find_first_of("/\\") != std::string::npos || ext.find("..") != std::string::npos) {
    fail(ErrorKind::validation, "bad scan extension '" + extension + "'");
  }
  const std::string name = sha256_hex(bytes) + ext;
  const auto target = blob_dir / name;
  std::error_code ec;
  if (!std::filesystem::exists(target, ec)) {
    std::filesystem::create_directories(blob_dir, ec);
    const auto tmp = blob_dir / (name + ".tmp");
    {
      std::ofstream out(tmp, std::ios::binary);
      out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
      if (!out) fail(ErrorKind::io, "cannot write blob " + tmp.string());
    }
    std::filesystem::rename(tmp, target, ec);
    if (ec) fail(ErrorKind::io, "cannot store blob " + target.string() + ": " + ec.message());
  }
  return std::string(kBlobPrefix) + name;
}

std::string store_blob(const std::filesystem::path& source, const std::filesystem::path& blob_dir) {
  const auto bytes = read_bytes(source);
  return store_blob(std::span<const std::uint8_t>(bytes), lower_extension(source), blob_dir);
}

gateway::ChatRequest build_verification_request(const Question& question, const ScanContent& scan,
                                                const std::string& transcription, const VerifierConfig& config) {
  std::ostringstream user;
  user << "### Question " << question.id << "\n" << question.text << "\n\n";
  user << prompt::kHandwrittenHeading << "\n";
  if (scan.reading) {
    user << "Reading of the handwritten scan:\n" << fenced(*scan.reading);
  } else {
    user << "The handwritten scan is attached as an image.\n";
  }
  user << "\n" << prompt::kTypedHeading << "\n" << fenced(transcription) << "\n";
  user << prompt::kContractPrefix << prompt::kVerificationSchemaVersion << "\n"
       << "Reply with one JSON object and nothing else:\n"
       << R"({"verdict": "match" | "mismatch" | "unreadable", "confidence": number between 0 and 1, )"
       << R"("discrepancies": [{"question_id": ")" << question.id
       << R"(", "handwritten_excerpt": text, "typed_excerpt": text, "severity": "cosmetic" | "semantic"}]})"
       << "\n"
       << "Use \"match\" only when the transcription is identical to the handwriting, with an empty discrepancy "
          "list. A mismatch must list at least one discrepancy. Use \"unreadable\" when the handwriting "
          "cannot be read.\n";

  gateway::ChatRequest req;
  req.system_message = std::string(kVerifierRole);
  req.user_message = user.str();
  req.model = config.model;
  req.temperature = config.temperature;
  if (scan.image) req.attachments.push_back(*scan.image);
  return req;
}

VerificationOutcome verify_answer(const Submission& submission, const Question& question,
                                  gateway::ProviderHandle& adjudicator, const VerifierConfig& config) {
  auto it = submission.answers.find(question.id);
  if (it == submission.answers.end() || it->second.scan_ref.empty()) {
    fail(ErrorKind::validation, "submission '" + submission.id + "' has no scan for question '" + question.id + "'");
  }
  const ScanContent scan = load_scan(it->second.scan_ref, config.blob_dir);
  gateway::ChatRequest req = build_verification_request(question, scan, it->second.transcription, config);
  const std::string base_message = req.user_message;

  VerificationOutcome out;
  out.prompt_text = req.system_message + "\n\n" + base_message;
  std::string last_problem;
  for (int attempt = 0; attempt <= config.parse_reasks; ++attempt) {
    if (attempt > 0) req.user_message = base_message + std::string(prompt::kCorrectiveSuffix);
    gateway::ChatResponse resp;
    try {
      resp = adjudicator.complete(req);
    } catch (const Error& e) {
      if (gateway_gave_up(e.kind())) fail(ErrorKind::unavailable, "verdict unavailable: " + std::string(e.what()));
      throw;
    }
    ++out.calls;
    out.raw_response = resp.raw_text;
    auto parsed = gateway::parse_verdict(resp.raw_text);
    if (auto* v = std::get_if<VerificationVerdict>(&parsed)) {
      for (auto& d : v->discrepancies) {
        if (d.question_id.empty()) d.question_id = question.id;
      }
      out.verdict = std::move(*v);
      return out;
    }
    const auto& failure = std::get<gateway::ParseFailure>(parsed);
    last_problem = std::string(enum_name(failure.reason)) + ": " + failure.detail;
  }
  fail(ErrorKind::unavailable, "verdict unavailable after " + std::to_string(out.calls) +
                                   " unparseable replies (" + last_problem + ")");
}

VerificationReport verify_and_record(store::RecordStore& store, const std::string& submission_id,
                                     gateway::ProviderHandle& adjudicator, const IntegrityPolicy& policy,
                                     const VerifierConfig& config, const std::string& actor) {
  policy.validate();
  const auto sub = store.submission(submission_id);
  if (!sub) fail(ErrorKind::not_found, "unknown submission '" + submission_id + "'");
  if (sub->integrity_status != IntegrityStatus::unverified) {
    fail(ErrorKind::state, "submission '" + submission_id + "' is already " +
                               std::string(enum_name(sub->integrity_status)));
  }
  const auto exam = store.exam(sub->exam_id);
  if (!exam) fail(ErrorKind::not_found, "unknown exam '" + sub->exam_id + "'");

  VerifierConfig cfg = config;
  if (cfg.blob_dir.empty()) cfg.blob_dir = store.blob_dir();

  VerificationReport report;
  report.submission_id = submission_id;
  Json trail = Json::array();
  std::map<std::string, Decimal> pending;
  for (const auto& q : exam->questions) {
    if (sub->answers.count(q.id) == 0) continue;
    Json entry{{"question_id", q.id}};
    try {
      auto outcome = verify_answer(*sub, q, adjudicator, cfg);
      IntegrityFinding finding{q.id, outcome.verdict, apply_integrity_policy(outcome.verdict, policy)};
      if (finding.action == IntegrityAction::penalize_pending_confirmation) pending[q.id] = policy.penalty_fraction;
      entry["prompt"] = outcome.prompt_text;
      entry["raw_response"] = outcome.raw_response;
      entry["verdict"] = finding.verdict;
      entry["action"] = enum_name(finding.action);
      report.findings.push_back(std::move(finding));
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::unavailable && e.kind() != ErrorKind::validation && e.kind() != ErrorKind::io) throw;
      report.manual_review = true;
      report.error = e.what();
      entry["error"] = e.what();
    }
    trail.push_back(std::move(entry));
    if (report.manual_review) break;
  }

  if (report.manual_review) {
    store.update_submission(
        submission_id, [](Submission& s) { s.manual_verification = true; },
        {actor, AuditAction::verification_unavailable, submission_id, Json{{"questions", trail}}.dump()});
    report.status = IntegrityStatus::unverified;
    return report;
  }

  int worst = 0;
  for (const auto& f : report.findings) worst = std::max(worst, action_rank(f.action));
  report.status = worst == 0 ? IntegrityStatus::verified : IntegrityStatus::flagged;
  store.update_submission(
      submission_id,
      [&](Submission& s) {
        s.integrity_status = report.status;
        s.findings = report.findings;
        s.pending_penalties = pending;
        s.manual_verification = false;
      },
      {actor, AuditAction::verification_recorded, submission_id,
       Json{{"status", enum_name(report.status)}, {"questions", trail}}.dump()});
  return report;
}

Submission confirm_penalty(store::RecordStore& store, const std::string& submission_id, const std::string& instructor,
                           const std::string& reason) {
  if (instructor.empty()) fail(ErrorKind::authorization, "penalty confirmation needs a named instructor");
  const auto sub = store.submission(submission_id);
  if (!sub) fail(ErrorKind::not_found, "unknown submission '" + submission_id + "'");
  if (sub->pending_penalties.empty()) {
    fail(ErrorKind::state, "submission '" + submission_id + "' has no pending penalty to confirm");
  }
  return store.update_submission(
      submission_id,
      [](Submission& s) {
        if (s.integrity_status != IntegrityStatus::flagged) {
          fail(ErrorKind::state, "only flagged submissions can be penalized");
        }
        s.integrity_status = IntegrityStatus::penalized;
        for (const auto& [q, f] : s.pending_penalties) s.confirmed_penalties[q] = f;
        s.pending_penalties.clear();
      },
      {instructor, AuditAction::penalty_confirmed, submission_id, reason});
}

Submission clear_integrity_flag(store::RecordStore& store, const std::string& submission_id,
                                const std::string& instructor, const std::string& reason) {
  if (instructor.empty()) fail(ErrorKind::authorization, "clearing a flag needs a named instructor");
  return store.update_submission(
      submission_id,
      [](Submission& s) {
        if (s.integrity_status != IntegrityStatus::flagged) fail(ErrorKind::state, "submission is not flagged");
        s.integrity_status = IntegrityStatus::verified;
        s.pending_penalties.clear();
      },
      {instructor, AuditAction::integrity_flag_cleared, submission_id, reason});
}

}  // namespace aipat::verifier
