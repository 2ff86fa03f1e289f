#include "aipat_tools/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "aipat/analytics.hpp"
#include "aipat/appeals.hpp"
#include "aipat/csv.hpp"
#include "aipat/csv_io.hpp"
#include "aipat/error.hpp"
#include "aipat/grading.hpp"
#include "aipat/json_io.hpp"
#include "aipat/secure_dist.hpp"
#include "aipat/service/api.hpp"
#include "aipat/service/config.hpp"
#include "aipat/service/server.hpp"
#include "aipat/verifier.hpp"

namespace aipat::tools {

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::io, "cannot read " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
  if (!f) fail(ErrorKind::io, "cannot write " + path);
}

Json import_report_json(const csv_io::ImportReport& r) {
  Json errors = Json::array();
  for (const auto& e : r.errors) errors.push_back({{"line", e.line}, {"message", e.message}});
  return {{"rows_accepted", r.rows_accepted},
          {"records_written", r.records_written},
          {"records_skipped", r.records_skipped},
          {"errors", errors}};
}

// "c1=3" -> {"c1": 3}
std::map<std::string, Decimal> parse_points(const std::vector<std::string>& items) {
  std::map<std::string, Decimal> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) fail(ErrorKind::structural, "expected CRITERION=POINTS, got '" + item + "'");
    const auto points = Decimal::parse(item.substr(eq + 1));
    if (!points) fail(ErrorKind::structural, "bad points in '" + item + "'");
    out[item.substr(0, eq)] = *points;
  }
  return out;
}

// "label" or "label:temperature"
GraderIdentity parse_grader(const std::string& spec, const std::string& provider, Decimal default_temperature) {
  GraderIdentity g;
  g.kind = GraderKind::model;
  g.provider_id = provider;
  g.temperature = default_temperature;
  const auto colon = spec.rfind(':');
  g.label = spec.substr(0, colon);
  if (colon != std::string::npos) {
    const auto t = Decimal::parse(spec.substr(colon + 1));
    if (!t) fail(ErrorKind::structural, "bad temperature in grader '" + spec + "'");
    g.temperature = *t;
  }
  if (g.label.empty()) fail(ErrorKind::structural, "grader label is empty in '" + spec + "'");
  return g;
}

Json summary_json(const grading::GradingSummary& s) {
  return {{"attempted", s.attempted},      {"created", s.created},        {"skipped", s.skipped},
          {"manual_review", s.manual_review}, {"failures", s.failures},  {"failed_cells", s.failed_cells},
          {"aborted", s.aborted},          {"abort_reason", s.abort_reason}};
}

Json verification_json(const verifier::VerificationReport& r) {
  return {{"submission_id", r.submission_id},
          {"status", std::string(enum_name(r.status))},
          {"findings", r.findings},
          {"manual_review", r.manual_review},
          {"error", r.error}};
}

// student_id,file_path,archive_name (archive_name optional)
std::vector<dist::ArchiveSpec> read_manifest(const std::string& path) {
  const std::string text = read_text(path);
  auto records = csv::parse(text);
  const std::vector<std::string> header{"student_id", "file_path", "archive_name"};
  if (records.empty() || records.front().fields != header) {
    fail(ErrorKind::structural, "manifest header must be student_id,file_path,archive_name");
  }
  const std::filesystem::path base = std::filesystem::path(path).parent_path();
  std::map<std::string, dist::ArchiveSpec> by_student;
  std::vector<std::string> order;
  for (std::size_t i = 1; i < records.size(); ++i) {
    const auto& f = records[i].fields;
    if (f.size() != 3) fail(ErrorKind::structural, "manifest line " + std::to_string(records[i].line) + ": expected 3 fields");
    std::filesystem::path file = f[1];
    if (file.is_relative()) file = base / file;
    auto [it, fresh] = by_student.try_emplace(f[0]);
    if (fresh) {
      it->second.student_id = f[0];
      order.push_back(f[0]);
    }
    dist::ArchiveFile af;
    af.name = f[2].empty() ? std::filesystem::path(f[1]).filename().string() : f[2];
    af.source = file;
    it->second.files.push_back(std::move(af));
  }
  std::vector<dist::ArchiveSpec> specs;
  for (const auto& id : order) specs.push_back(std::move(by_student[id]));
  return specs;
}

struct Globals {
  std::string data_dir;
  std::string config_path;
  std::string actor = "operator";
};

class Session {
 public:
  explicit Session(const Globals& g) : globals_(g) {
    config_ = g.config_path.empty() ? service::default_config() : service::load_config(g.config_path);
    if (!g.data_dir.empty()) config_.data_dir = g.data_dir;
  }

  service::Config& config() { return config_; }
  const std::string& actor() const { return globals_.actor; }

  store::RecordStore& store() {
    if (!store_) {
      store_ = store::RecordStore::open(config_.data_dir);
      config_.verifier.blob_dir = store_->blob_dir();
    }
    return *store_;
  }

  gateway::ProviderRegistry& registry() {
    if (!registry_) registry_ = service::build_registry(config_, system_clock());
    return *registry_;
  }

 private:
  Globals globals_;
  service::Config config_;
  std::unique_ptr<store::RecordStore> store_;
  std::optional<gateway::ProviderRegistry> registry_;
};

}  // namespace

int cli_dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Exam grading pipeline: integrity checks, rubric grading, appeals, analytics, distribution", "aipat"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--data-dir", g.data_dir, "Record store directory (overrides the config file)");
  app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
  app.add_option("--actor", g.actor, "Name recorded in the audit log")->capture_default_str();

  std::function<int(Session&)> action;
  auto on = [&action](CLI::App* cmd, std::function<int(Session&)> fn) { cmd->final_callback([&action, fn] { action = fn; }); };

  // exam -------------------------------------------------------------------
  auto* exam = app.add_subcommand("exam", "Register and list exams");
  exam->require_subcommand(1);
  std::string exam_file;
  auto* exam_add = exam->add_subcommand("add", "Register an exam document ({\"exam\":..., \"rubrics\":[...]})");
  exam_add->add_option("file", exam_file)->required()->check(CLI::ExistingFile);
  on(exam_add, [&](Session& s) {
    Json j = Json::parse(read_text(exam_file), nullptr, false);
    if (j.is_discarded()) fail(ErrorKind::structural, exam_file + " is not valid JSON");
    const auto doc = parse_exam_document(j);
    s.store().register_exam(doc, {s.actor(), AuditAction::exam_registered, doc.exam.id, ""});
    out << Json{{"registered", doc.exam.id}}.dump() << "\n";
    return 0;
  });
  auto* exam_list = exam->add_subcommand("list", "List registered exams");
  on(exam_list, [&](Session& s) {
    Json items = Json::array();
    for (const auto& e : s.store().exams()) items.push_back(e);
    out << items.dump(2) << "\n";
    return 0;
  });

  // ingest -----------------------------------------------------------------
  std::string exam_id, in_path, out_path, base_dir;
  auto* ingest = app.add_subcommand("ingest", "Import answers: student_id,question_id,transcription,scan_path");
  ingest->add_option("--exam", exam_id)->required();
  ingest->add_option("--roster", in_path, "Roster CSV")->required()->check(CLI::ExistingFile);
  ingest->add_option("--base-dir", base_dir, "Directory relative scan paths resolve against (default: the CSV's)");
  on(ingest, [&](Session& s) {
    std::filesystem::path base = base_dir.empty() ? std::filesystem::path(in_path).parent_path() : std::filesystem::path(base_dir);
    const auto report = csv_io::import_roster_csv(s.store(), exam_id, read_text(in_path),
                                                  base.empty() ? "." : base, s.actor());
    out << import_report_json(report).dump(2) << "\n";
    return report.errors.empty() ? 0 : 1;
  });

  // verify -----------------------------------------------------------------
  std::vector<std::string> submission_ids;
  auto* verify = app.add_subcommand("verify", "Compare handwritten scans with transcriptions");
  verify->add_option("--exam", exam_id)->required();
  verify->add_option("--submission", submission_ids, "Only these submissions (default: every unverified one)");
  on(verify, [&](Session& s) {
    auto& st = s.store();
    if (!st.exam(exam_id)) fail(ErrorKind::not_found, "unknown exam '" + exam_id + "'");
    auto ids = submission_ids;
    if (ids.empty()) {
      for (const auto& sub : st.submissions(exam_id)) {
        if (sub.integrity_status == IntegrityStatus::unverified) ids.push_back(sub.id);
      }
    }
    auto& adjudicator = s.registry().get(s.config().verifier_provider);
    Json reports = Json::array();
    for (const auto& id : ids) {
      reports.push_back(verification_json(
          verifier::verify_and_record(st, id, adjudicator, s.config().integrity, s.config().verifier, s.actor())));
    }
    out << reports.dump(2) << "\n";
    return 0;
  });

  // integrity --------------------------------------------------------------
  std::string submission_id, reason;
  auto* integrity = app.add_subcommand("integrity", "Instructor decisions on flagged submissions");
  integrity->require_subcommand(1);
  auto* confirm = integrity->add_subcommand("confirm-penalty", "flagged -> penalized");
  auto* clear = integrity->add_subcommand("clear", "flagged -> verified");
  for (auto* cmd : {confirm, clear}) {
    cmd->add_option("--submission", submission_id)->required();
    cmd->add_option("--reason", reason);
  }
  on(confirm, [&](Session& s) {
    out << Json(verifier::confirm_penalty(s.store(), submission_id, s.actor(), reason)).dump(2) << "\n";
    return 0;
  });
  on(clear, [&](Session& s) {
    out << Json(verifier::clear_integrity_flag(s.store(), submission_id, s.actor(), reason)).dump(2) << "\n";
    return 0;
  });

  // grade ------------------------------------------------------------------
  std::string provider = "mock", temperature = "0";
  std::vector<std::string> graders;
  int runs = 1;
  auto* grade = app.add_subcommand("grade", "Grade every (submission, question, grader, run) cell");
  grade->add_option("--exam", exam_id)->required();
  grade->add_option("--provider", provider, "Provider id from the config")->capture_default_str();
  grade->add_option("--grader", graders, "Grader label, optionally LABEL:TEMPERATURE (default: the provider id)");
  grade->add_option("--temperature", temperature, "Default temperature")->capture_default_str();
  grade->add_option("--runs", runs, "Runs per grader")->capture_default_str()->check(CLI::PositiveNumber);
  grade->add_option("--submission", submission_ids, "Only these submissions");
  on(grade, [&](Session& s) {
    const auto t = Decimal::parse(temperature);
    if (!t) fail(ErrorKind::structural, "bad --temperature '" + temperature + "'");
    grading::GradingJob job;
    job.exam_id = exam_id;
    job.submission_ids = submission_ids;
    job.runs_per_grader = runs;
    if (graders.empty()) graders.push_back(provider);
    for (const auto& spec : graders) job.graders.push_back(parse_grader(spec, provider, *t));
    grading::GradingConfig gc = s.config().grading;
    gc.actor = s.actor();
    const auto summary = grading::grade_batch(job, s.registry(), s.store(), gc);
    out << summary_json(summary).dump(2) << "\n";
    return summary.aborted || summary.failures > 0 ? 1 : 0;
  });

  // import-human -----------------------------------------------------------
  auto* import_human = app.add_subcommand(
      "import-human", "Import human grades: student_id,question_id,grader_label,session_index,criterion_id,tier,points,comment");
  import_human->add_option("--exam", exam_id)->required();
  import_human->add_option("--in", in_path)->required()->check(CLI::ExistingFile);
  on(import_human, [&](Session& s) {
    const auto report = csv_io::import_human_grades_csv(s.store(), exam_id, read_text(in_path), s.actor());
    out << import_report_json(report).dump(2) << "\n";
    return report.errors.empty() ? 0 : 1;
  });

  // export -----------------------------------------------------------------
  std::string grader_label;
  auto* exp = app.add_subcommand("export", "Write CSV exports");
  exp->require_subcommand(1);
  auto* exp_grades = exp->add_subcommand("grades", "One row per student and grader pass");
  exp_grades->add_option("--exam", exam_id)->required();
  exp_grades->add_option("--grader-label", grader_label);
  exp_grades->add_option("--out", out_path, "Output file (default: stdout)");
  on(exp_grades, [&](Session& s) {
    write_text(out_path, csv_io::export_grades_csv(s.store(), exam_id, {grader_label}), out);
    return 0;
  });
  auto* exp_appeals = exp->add_subcommand("appeals", "Resolved appeals, the input of `report appeals`");
  exp_appeals->add_option("--exam", exam_id, "Only this exam");
  exp_appeals->add_option("--out", out_path, "Output file (default: stdout)");
  on(exp_appeals, [&](Session& s) {
    write_text(out_path, appeals::export_appeals_csv(s.store(), exam_id), out);
    return 0;
  });

  // appeal -----------------------------------------------------------------
  std::string appeal_id, evaluation_id, student_id, argument, explanation, action_name, state_name;
  std::vector<std::string> points;
  bool all = false;
  auto* appeal = app.add_subcommand("appeal", "Appeal workflow");
  appeal->require_subcommand(1);
  auto* ap_submit = appeal->add_subcommand("submit", "File an appeal for a student");
  ap_submit->add_option("--evaluation", evaluation_id)->required();
  ap_submit->add_option("--student", student_id)->required();
  ap_submit->add_option("--argument", argument)->required();
  on(ap_submit, [&](Session& s) {
    out << Json(appeals::submit_appeal(s.store(), evaluation_id, student_id, argument, s.config().appeal)).dump(2) << "\n";
    return 0;
  });
  auto* ap_list = appeal->add_subcommand("list", "List appeals");
  ap_list->add_option("--state", state_name);
  on(ap_list, [&](Session& s) {
    std::optional<AppealState> st;
    if (!state_name.empty()) {
      st = enum_from<AppealState>(state_name);
      if (!st) fail(ErrorKind::validation, "unknown appeal state '" + state_name + "'");
    }
    Json items = Json::array();
    for (const auto& a : s.store().appeals(st)) items.push_back(a);
    out << items.dump(2) << "\n";
    return 0;
  });
  auto* ap_review = appeal->add_subcommand("review", "Ask the reviewer model for a proposal");
  auto* review_target = ap_review->add_option("--appeal", appeal_id);
  ap_review->add_flag("--all", all, "Every submitted or under-review appeal")->excludes(review_target);
  on(ap_review, [&](Session& s) {
    auto& st = s.store();
    std::vector<std::string> ids;
    if (all) {
      for (const auto& a : st.appeals()) {
        if ((a.state == AppealState::submitted || a.state == AppealState::under_review) && !a.needs_manual) {
          ids.push_back(a.id);
        }
      }
    } else {
      if (appeal_id.empty()) fail(ErrorKind::structural, "give --appeal or --all");
      ids.push_back(appeal_id);
    }
    auto& reviewer = s.registry().get(s.config().reviewer_provider);
    Json results = Json::array();
    for (const auto& id : ids) {
      const auto packet = appeals::assemble_review_packet(st, id, s.actor());
      const auto proposal = appeals::review_appeal(st, packet, reviewer, s.config().reviewer, s.config().appeal, s.actor());
      results.push_back({{"appeal", *st.appeal(id)}, {"proposal", proposal ? Json(*proposal) : Json(nullptr)}});
    }
    out << results.dump(2) << "\n";
    return 0;
  });
  auto* ap_propose = appeal->add_subcommand("propose", "Instructor-authored proposal");
  ap_propose->add_option("--appeal", appeal_id)->required();
  ap_propose->add_option("--points", points, "CRITERION=POINTS, repeatable");
  ap_propose->add_option("--explanation", explanation)->required();
  on(ap_propose, [&](Session& s) {
    auto& st = s.store();
    const auto a = st.appeal(appeal_id);
    if (a && a->state == AppealState::submitted) appeals::assemble_review_packet(st, appeal_id, s.actor());
    out << Json(appeals::propose_manual(st, appeal_id, s.actor(), parse_points(points), explanation)).dump(2) << "\n";
    return 0;
  });
  auto* ap_finalize = appeal->add_subcommand("finalize", "Confirm, override or reject a proposal (confirmer = --actor)");
  ap_finalize->add_option("--appeal", appeal_id)->required();
  ap_finalize->add_option("--action", action_name)->required()->check(CLI::IsMember({"accept", "override", "reject_to_manual"}));
  ap_finalize->add_option("--points", points, "CRITERION=POINTS for override, repeatable");
  ap_finalize->add_option("--explanation", explanation);
  on(ap_finalize, [&](Session& s) {
    appeals::ReviewerDecision d;
    d.action = *enum_from<ReviewerAction>(action_name);
    d.adjustments = parse_points(points);
    d.explanation = explanation;
    const auto r = appeals::finalize_resolution(s.store(), appeal_id, d, s.actor());
    out << Json{{"appeal", *s.store().appeal(appeal_id)}, {"resolution", r ? Json(*r) : Json(nullptr)}}.dump(2) << "\n";
    return 0;
  });
  auto* ap_publish = appeal->add_subcommand("publish", "Release a resolution to the student");
  ap_publish->add_option("--appeal", appeal_id)->required();
  on(ap_publish, [&](Session& s) {
    out << Json(appeals::publish_resolution(s.store(), appeal_id, s.actor())).dump(2) << "\n";
    return 0;
  });

  // report -----------------------------------------------------------------
  std::string format = "csv";
  bool normalized = false;
  auto* report = app.add_subcommand("report", "Statistics over exported CSVs (or straight from the store with --exam)");
  report->require_subcommand(1);
  std::map<std::string, CLI::App*> reports;
  for (const char* kind : {"descriptive", "correlation", "reliability", "appeals"}) {
    auto* r = report->add_subcommand(kind);
    auto* in_opt = r->add_option("--in", in_path, "Input CSV")->check(CLI::ExistingFile);
    r->add_option("--exam", exam_id, "Read from the store instead of --in")->excludes(in_opt);
    r->add_option("--format", format)->check(CLI::IsMember({"csv", "json"}))->capture_default_str();
    r->add_option("--out", out_path, "Output file (default: stdout)");
    if (std::string(kind) != "appeals") r->add_flag("--normalized", normalized, "Use normalized totals (0-100)");
    reports[kind] = r;
  }
  auto input_for = [&](Session& s, bool appeals_report) {
    if (!in_path.empty()) return read_text(in_path);
    if (appeals_report) return appeals::export_appeals_csv(s.store(), exam_id);
    if (exam_id.empty()) fail(ErrorKind::structural, "give --in or --exam");
    return csv_io::export_grades_csv(s.store(), exam_id);
  };
  on(reports["appeals"], [&](Session& s) {
    auto rows = analytics::read_appeal_rows(input_for(s, true));
    const auto r = analytics::appeal_report(rows.rows, rows.rejected);
    write_text(out_path, format == "csv" ? analytics::appeal_report_csv(r) : analytics::appeal_report_json(r).dump(2) + "\n", out);
    for (const auto& rej : r.rejected) err << Json{{"line", rej.line}, {"rejected", rej.reason}}.dump() << "\n";
    return r.rejected.empty() ? 0 : 1;
  });
  on(reports["descriptive"], [&](Session& s) {
    const auto cols = analytics::read_grade_columns(input_for(s, false), normalized);
    write_text(out_path, format == "csv" ? analytics::descriptive_csv(cols) : analytics::descriptive_json(cols).dump(2) + "\n", out);
    return 0;
  });
  on(reports["correlation"], [&](Session& s) {
    const auto cols = analytics::read_grade_columns(input_for(s, false), normalized);
    write_text(out_path, format == "csv" ? analytics::correlation_csv(cols) : analytics::correlation_json(cols).dump(2) + "\n", out);
    return 0;
  });
  on(reports["reliability"], [&](Session& s) {
    const auto m = analytics::reliability_matrix(analytics::read_grade_columns(input_for(s, false), normalized));
    write_text(out_path, format == "csv" ? analytics::reliability_csv(m) : analytics::reliability_json(m).dump(2) + "\n", out);
    return 0;
  });

  // dist -------------------------------------------------------------------
  std::string manifest, out_dir, ledger_path;
  auto* dist_cmd = app.add_subcommand("dist", "Password-protected result archives");
  dist_cmd->require_subcommand(1);
  auto* dist_build = dist_cmd->add_subcommand("build", "One AES-encrypted ZIP per student");
  dist_build->add_option("--exam", exam_id)->required();
  dist_build->add_option("--manifest", manifest, "CSV: student_id,file_path,archive_name")->required()->check(CLI::ExistingFile);
  dist_build->add_option("--out-dir", out_dir, "Archive root (default: from config)");
  dist_build->add_option("--ledger", ledger_path, "Also write the operator password CSV here (mode 0600)");
  on(dist_build, [&](Session& s) {
    const auto specs = read_manifest(manifest);
    const std::filesystem::path root = out_dir.empty() ? s.config().dist_dir() : std::filesystem::path(out_dir);
    const auto r = dist::build_distribution(s.store(), exam_id, specs, root, s.config().password, s.actor());
    if (!ledger_path.empty()) dist::write_ledger_csv(s.store(), exam_id, ledger_path);
    Json failures = Json::array();
    for (const auto& [student, why] : r.failures) failures.push_back({{"student_id", student}, {"reason", why}});
    out << Json{{"built", r.built}, {"skipped", r.skipped}, {"failures", failures}}.dump(2) << "\n";
    return r.failures.empty() ? 0 : 1;
  });

  // serve ------------------------------------------------------------------
  std::string host, tokens_path;
  int port = -1;
  auto* serve = app.add_subcommand("serve", "Run the REST service");
  serve->add_option("--host", host);
  serve->add_option("--port", port)->check(CLI::Range(0, 65535));
  serve->add_option("--tokens", tokens_path, "Token file (JSON array of {token, role, subject})");
  on(serve, [&](Session& s) {
    auto& cfg = s.config();
    if (!host.empty()) cfg.host = host;
    if (port >= 0) cfg.port = port;
    if (!tokens_path.empty()) cfg.token_file = tokens_path;
    if (cfg.token_file.empty()) fail(ErrorKind::validation, "a token file is required (--tokens or token_file in the config)");
    cfg.validate();
    auto tokens = service::TokenStore::load(cfg.token_file);
    service::Api api(s.store(), s.registry(), cfg, std::move(tokens));
    service::Server server(api);
    const int bound = server.bind(cfg.host, cfg.port);
    out << Json{{"listening", cfg.host + ":" + std::to_string(bound)}}.dump() << std::endl;
    server.listen();
    return 0;
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    Session session(g);
    return action ? action(session) : 2;
  } catch (const Error& e) {
    err << Json{{"error", {{"kind", std::string(to_string(e.kind()))}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << Json{{"error", {{"kind", "io"}, {"message", e.what()}}}}.dump() << "\n";
    return 1;
  }
}

}  // namespace aipat::tools
