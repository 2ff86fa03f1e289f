#include "aipat/gateway/mock_provider.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

#include "aipat/digest.hpp"
#include "aipat/error.hpp"
#include "aipat/gateway/structured_output.hpp"
#include "aipat/prompt_contract.hpp"

namespace aipat::gateway {

namespace {

using Json = nlohmann::json;

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot read mock fixture " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

MockOutcome outcome_from_json(const Json& j) {
  if (j.contains("text")) return MockOutcome::reply(j.at("text").get<std::string>());
  const std::string err = j.value("error", "");
  if (err == "timeout") return MockOutcome::timeout();
  if (err == "rate_limited") return MockOutcome::rate_limited();
  if (err == "transport") return MockOutcome::transport();
  if (err == "auth") return MockOutcome::auth();
  fail(ErrorKind::structural, "mock outcome needs 'text' or a known 'error'");
}

// Text between the first kOpenFence line after `heading` and the next
// kCloseFence line, provided no other heading comes first.
std::optional<std::string> fenced_after(const std::string& text, std::string_view heading) {
  const auto h = text.find(heading);
  if (h == std::string::npos) return std::nullopt;
  const std::string open = std::string(prompt::kOpenFence) + "\n";
  const std::string close = "\n" + std::string(prompt::kCloseFence);
  const auto b = text.find(open, h);
  if (b == std::string::npos) return std::nullopt;
  const auto next_heading = text.find("\n### ", h + heading.size());
  if (next_heading != std::string::npos && next_heading < b) return std::nullopt;
  const auto start = b + open.size();
  const auto e = text.find(close, start);
  if (e == std::string::npos) return std::nullopt;
  return text.substr(start, e - start);
}

std::vector<std::string> split_lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::string squeeze(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c != ' ' && c != '\t' && c != '\r') out += c;
  }
  return out;
}

std::string mock_evaluation(const ChatRequest& request) {
  const std::string& msg = request.user_message;
  const auto pos = msg.find(prompt::kCriteriaOrderPrefix);
  if (pos == std::string::npos) return R"({"error":"mock cannot find the criteria list"})";
  const auto line_end = msg.find('\n', pos);
  std::string list = msg.substr(pos + prompt::kCriteriaOrderPrefix.size(),
                                line_end == std::string::npos ? std::string::npos
                                                              : line_end - pos - prompt::kCriteriaOrderPrefix.size());
  const bool blank = msg.find(prompt::kBlankAnswerDirective) != std::string::npos;
  const std::string digest = request.digest();

  // Entries look like "c1 (max 3)", separated by ", ".
  ParsedEvaluation eval;
  std::size_t cursor = 0;
  while (cursor < list.size()) {
    auto open = list.find(" (max ", cursor);
    if (open == std::string::npos) break;
    auto close = list.find(')', open);
    if (close == std::string::npos) break;
    const std::string id = list.substr(cursor, open - cursor);
    const auto max = Decimal::parse(list.substr(open + 6, close - open - 6)).value_or(kZero);
    const std::string h = sha256_hex(digest + "/" + id);
    const int pick = blank ? 2 : (std::stoi(h.substr(0, 2), nullptr, 16) % 3);
    CriterionScore score{id, Tier::none, kZero, ""};
    if (pick == 0) {
      score.tier = Tier::full;
      score.points = max;
      score.justification = "Meets the full-points descriptor.";
    } else if (pick == 1 && max.hundredths() >= 2) {
      score.tier = Tier::partial;
      score.points = Decimal::from_hundredths(max.hundredths() / 2);
      score.justification = "Partially meets the criterion.";
    } else {
      score.justification = blank ? "No answer was given." : "Does not address the criterion.";
    }
    eval.total += score.points;
    eval.per_criterion.push_back(std::move(score));
    cursor = close + 1;
    while (cursor < list.size() && (list[cursor] == ',' || list[cursor] == ' ')) ++cursor;
  }
  eval.overall_feedback = blank ? "The question was left blank." : "Deterministic mock feedback.";
  return render_evaluation(eval);
}

std::string mock_verdict(const ChatRequest& request) {
  const auto reading = fenced_after(request.user_message, prompt::kHandwrittenHeading);
  const auto typed = fenced_after(request.user_message, prompt::kTypedHeading);
  VerificationVerdict v;
  if (!typed) return R"({"error":"mock cannot find the typed transcription"})";
  if (!reading) {
    // Image-only input: the mock cannot read it.
    v.verdict = Verdict::match;
    v.confidence = 0.5;
    return render_verdict(v);
  }
  if (*reading == prompt::kIllegibleMarker) {
    v.verdict = Verdict::unreadable;
    v.confidence = 0.2;
    return render_verdict(v);
  }
  if (*reading == *typed) {
    v.verdict = Verdict::match;
    v.confidence = 0.99;
    return render_verdict(v);
  }
  v.verdict = Verdict::mismatch;
  v.confidence = 0.9;
  const auto a = split_lines(*reading);
  const auto b = split_lines(*typed);
  const std::size_t n = std::max(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    const std::string hw = i < a.size() ? a[i] : "";
    const std::string ty = i < b.size() ? b[i] : "";
    if (hw == ty) continue;
    Discrepancy d;
    d.handwritten_excerpt = hw.empty() ? "(absent)" : hw;
    d.typed_excerpt = ty.empty() ? "(absent)" : ty;
    d.severity = squeeze(hw) == squeeze(ty) ? Severity::cosmetic : Severity::semantic;
    v.discrepancies.push_back(std::move(d));
  }
  if (v.discrepancies.empty()) {
    // Differences only in trailing newlines.
    v.discrepancies.push_back({"", "(line break)", "(line break)", Severity::cosmetic});
  }
  return render_verdict(v);
}

std::string mock_appeal_review() {
  return Json{{"decision", "uphold"},
              {"adjustments", Json::array()},
              {"explanation", "The original evaluation applies the rubric correctly."}}
      .dump();
}

}  // namespace

const MockOutcome& MockProvider::Script::next() {
  const MockOutcome& o = outcomes[std::min(cursor, outcomes.size() - 1)];
  if (cursor < outcomes.size()) ++cursor;
  return o;
}

MockProvider::MockProvider(std::string id) : id_(std::move(id)), fallback_(default_mock_response) {}

std::shared_ptr<MockProvider> MockProvider::from_fixture_dir(const std::filesystem::path& dir, std::string id) {
  auto mock = std::make_shared<MockProvider>(std::move(id));
  if (!std::filesystem::is_directory(dir)) fail(ErrorKind::io, "mock fixture directory not found: " + dir.string());
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    const auto& p = entry.path();
    const std::string digest = p.stem().string();
    if (p.extension() == ".txt") {
      mock->script(digest, {MockOutcome::reply(read_file(p))});
    } else if (p.extension() == ".json") {
      const Json doc = Json::parse(read_file(p));
      std::vector<MockOutcome> outcomes;
      for (const auto& o : doc.at("outcomes")) outcomes.push_back(outcome_from_json(o));
      if (!outcomes.empty()) mock->script(digest, std::move(outcomes));
    }
  }
  return mock;
}

void MockProvider::script(const std::string& digest, std::vector<MockOutcome> outcomes) {
  if (outcomes.empty()) fail(ErrorKind::validation, "a mock script needs at least one outcome");
  std::lock_guard lock(mu_);
  by_digest_[digest] = Script{std::move(outcomes), 0};
}

void MockProvider::script_when(Predicate predicate, std::vector<MockOutcome> outcomes) {
  if (outcomes.empty()) fail(ErrorKind::validation, "a mock script needs at least one outcome");
  std::lock_guard lock(mu_);
  by_predicate_.push_back({std::move(predicate), Script{std::move(outcomes), 0}});
}

void MockProvider::set_fallback(Responder responder) {
  std::lock_guard lock(mu_);
  fallback_ = std::move(responder);
}

std::string MockProvider::send(const ChatRequest& request) {
  MockOutcome outcome;
  {
    std::lock_guard lock(mu_);
    history_.push_back(request);
    const std::string digest = request.digest();
    if (auto it = by_digest_.find(digest); it != by_digest_.end()) {
      outcome = it->second.next();
    } else {
      bool matched = false;
      for (auto& ps : by_predicate_) {
        if (ps.predicate(request)) {
          outcome = ps.script.next();
          matched = true;
          break;
        }
      }
      if (!matched) outcome = MockOutcome::reply(fallback_(request));
    }
  }
  switch (outcome.kind) {
    case MockOutcome::Kind::text: return outcome.text;
    case MockOutcome::Kind::timeout: throw ProviderError(ProviderFailure::timeout, "mock timeout");
    case MockOutcome::Kind::rate_limited: throw ProviderError(ProviderFailure::rate_limited, "mock rate limit");
    case MockOutcome::Kind::transport: throw ProviderError(ProviderFailure::transport, "mock transport error");
    case MockOutcome::Kind::auth: throw ProviderError(ProviderFailure::auth, "mock auth failure");
  }
  return outcome.text;
}

int MockProvider::call_count() const {
  std::lock_guard lock(mu_);
  return static_cast<int>(history_.size());
}

std::vector<ChatRequest> MockProvider::history() const {
  std::lock_guard lock(mu_);
  return history_;
}

std::string default_mock_response(const ChatRequest& request) {
  const std::string& msg = request.user_message;
  const auto contract = [&](std::string_view version) {
    return msg.find(std::string(prompt::kContractPrefix) + std::string(version)) != std::string::npos;
  };
  if (contract(prompt::kGradingSchemaVersion)) return mock_evaluation(request);
  if (contract(prompt::kVerificationSchemaVersion)) return mock_verdict(request);
  if (contract(prompt::kAppealSchemaVersion)) return mock_appeal_review();
  return "mock provider: unrecognised prompt";
}

}  // namespace aipat::gateway
