#include "minehub/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <mutex>
#include <regex>
#include <set>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "minehub/dataset_exporter.hpp"
#include "minehub/error.hpp"
#include "minehub/git.hpp"
#include "minehub/issue_harvester.hpp"
#include "minehub/metrics.hpp"
#include "minehub/model.hpp"
#include "minehub/tar_archive.hpp"
#include "minehub/text.hpp"
#include "minehub/vcs_harvester.hpp"

namespace minehub {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t log_tail_bytes = 4096;

class LocalExecutor final : public Executor {
public:
  explicit LocalExecutor(int workers) : workers_(std::max(workers, 1)) {}

  void run(const std::function<bool()> &work) override {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(workers_));
    for (int i = 0; i < workers_; ++i) {
      threads.emplace_back([&work] {
        while (work()) {
        }
      });
    }
    for (auto &t : threads) {
      t.join();
    }
  }

private:
  int workers_;
};

fs::path log_dir(const Store &store) {
  const auto base = store.datadir().empty() ? fs::temp_directory_path() / "minehub"
                                            : store.datadir();
  return base / "logs";
}

std::string read_file(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string tail(const std::string &s) {
  if (s.size() <= log_tail_bytes) {
    return s;
  }
  return sanitize_utf8(s.substr(s.size() - log_tail_bytes)).text;
}

std::int64_t backoff_ms(const PipelineOptions &options, std::int64_t attempts) {
  const auto exponent = std::clamp<std::int64_t>(attempts - 1, 0, 16);
  return options.backoff_base.count() * (std::int64_t{1} << exponent);
}

// Applies the retry rule to a job that just failed or vanished.
void settle_failure(Document &job, const PipelineOptions &options, std::string_view terminal,
                    std::string error) {
  const auto attempts = job["attempts"].get<std::int64_t>();
  job["error"] = std::move(error);
  job["finished_at"] = format_utc(now_epoch_seconds());
  if (attempts <= options.max_retries) {
    job["state"] = "queued";
    job["not_before_ms"] = now_epoch_millis() + backoff_ms(options, attempts);
  } else {
    job["state"] = std::string(terminal);
  }
}

std::vector<Document> jobs_of(const Store &store, std::string_view run_id,
                              std::string_view kind = {}) {
  Query q;
  q.eq("run_id", std::string(run_id));
  if (!kind.empty()) {
    q.eq("kind", std::string(kind));
  }
  return store.query(col::job, q);
}

std::string canonical_source(const std::string &source) {
  std::error_code ec;
  if (fs::is_directory(source, ec)) {
    return fs::canonical(source).string();
  }
  return source;
}

std::vector<std::string> default_targets(Store &store, std::string_view project,
                                         std::string_view kind, const PipelineOptions &options) {
  std::vector<std::string> out;
  const auto project_id = ensure_project(store, project);
  if (kind == "harvest_vcs") {
    std::set<std::string> sources;
    for (const auto &vcs : vcs_systems_of(store, project_id)) {
      sources.insert(vcs["url"].get<std::string>());
    }
    for (const auto &s : options.vcs_sources) {
      sources.insert(canonical_source(s));
    }
    out.assign(sources.begin(), sources.end());
  } else if (kind == "harvest_issues") {
    for (const auto &sys : issue_systems_of(store, project_id)) {
      if (!str_or(sys, "source").empty()) {
        out.push_back(sys["id"].get<std::string>());
      }
    }
  } else if (kind == "metrics_commit") {
    for (const auto &c : commits_of(store, project_id)) {
      out.push_back(c["id"].get<std::string>());
    }
    std::sort(out.begin(), out.end());
  } else {
    out.push_back(project_id);
  }
  return out;
}

void run_builtin(JobContext &ctx, const PipelineOptions &options) {
  const auto kind = ctx.job["kind"].get<std::string>();
  const auto target = ctx.job["target"].get<std::string>();
  auto &store = ctx.store;
  if (kind == "harvest_vcs") {
    const auto s = harvest_vcs(store, target, ctx.project);
    ctx.log << "commits_stored=" << s.commits_stored << " actions_stored=" << s.actions_stored
            << '\n';
  } else if (kind == "harvest_issues") {
    const auto sys = store.get(col::issue_system, target);
    if (!sys) {
      throw Error(ErrorCode::not_found, "unknown issue system " + target);
    }
    const auto source = str_or(*sys, "source");
    const auto tracker = parse_tracker_type((*sys)["tracker_type"].get<std::string>());
    std::error_code ec;
    IssueHarvestSummary s;
    if (fs::is_regular_file(source, ec)) {
      s = harvest_issues_fixture(store, source, tracker, ctx.project,
                                 (*sys)["url"].get<std::string>());
    } else {
      LiveSourceOptions live;
      live.url = (*sys)["url"].get<std::string>();
      live.token = options.auth_token;
      s = harvest_issues_live(store, live, tracker, ctx.project);
    }
    ctx.log << "issues_stored=" << s.issues_stored << " comments_stored=" << s.comments_stored
            << '\n';
    for (const auto &e : s.errors) {
      ctx.log << "skipped: " << e << '\n';
    }
  } else if (kind == "metrics_commit") {
    const auto s = compute_metrics(store, target);
    ctx.log << "files_measured=" << s.files_measured << '\n';
  } else if (kind == "link") {
    const auto s = link_commits_to_issues(store, ctx.project, options.linker);
    ctx.log << "links_total=" << s.links_total << " links_created=" << s.links_created << '\n';
  } else if (kind == "induce") {
    const auto s = detect_inducing(store, ctx.project, options.induce);
    ctx.log << "inducing=" << s.inducing_links << " suspects=" << s.suspects
            << " filtered=" << s.filtered << '\n';
    for (const auto &e : s.errors) {
      ctx.log << "skipped: " << e << '\n';
    }
  } else if (kind == "label") {
    const auto s = label_commits(store, ctx.project, options.enricher);
    ctx.log << "commits=" << s.commits << '\n';
  } else if (kind == "identify") {
    const auto s = merge_identities(store, ctx.project);
    ctx.log << "persons=" << s.persons << " identities=" << s.identities << '\n';
  } else if (kind == "export") {
    const auto &e = options.export_options;
    ExportOptions eo;
    eo.release = e.release;
    eo.history_window_days = e.history_window_days;
    eo.label_window_days = e.label_window_days;
    eo.validated_only = options.induce.require_validated;
    const auto s = export_release(store, ctx.project, eo, e.output);
    ctx.log << "rows=" << s.rows << '\n';
  }
}

class StageRunner {
public:
  StageRunner(Store &store, std::string project, std::string run_id, std::string kind,
              const PipelineOptions &options)
      : store_(store), project_(std::move(project)), run_id_(std::move(run_id)),
        kind_(std::move(kind)), options_(options) {}

  StageSummary run(const std::vector<std::string> &targets) {
    for (const auto &t : targets) {
      Document job{{"run_id", run_id_}, {"kind", kind_},     {"target", t},
                   {"state", "queued"}, {"attempts", 0},
                   {"enqueued_at", format_utc(now_epoch_seconds())}};
      if (!store_.get(col::job, make_id(col::job, job))) {
        store_.upsert(col::job, std::move(job));
      }
    }

    std::atomic<bool> finished{false};
    auto executor = make_local_executor(options_.workers);
    std::thread pool([&] {
      executor->run([this] { return work(); });
      finished = true;
    });
    auto last_beat = std::chrono::steady_clock::now();
    while (!finished) {
      std::this_thread::sleep_for(options_.poll_interval);
      if (std::chrono::steady_clock::now() - last_beat >= options_.heartbeat_interval) {
        heartbeat();
        last_beat = std::chrono::steady_clock::now();
      }
      detect_failures(store_, run_id_, options_);
    }
    pool.join();

    StageSummary summary;
    summary.kind = kind_;
    for (const auto &job : jobs_of(store_, run_id_, kind_)) {
      ++summary.jobs;
      const auto state = job["state"].get<std::string>();
      summary.done += state == "done";
      summary.failed += state == "failed";
      summary.vanished += state == "vanished";
      summary.retries += static_cast<std::size_t>(
          std::max<std::int64_t>(job["attempts"].get<std::int64_t>() - 1, 0));
    }
    return summary;
  }

private:
  // One unit of worker activity; false once the stage has settled.
  bool work() {
    bool pending = false;
    for (const auto &job : jobs_of(store_, run_id_, kind_)) {
      const auto state = job["state"].get<std::string>();
      if (state == "running") {
        pending = true;
        continue;
      }
      if (state != "queued") {
        continue;
      }
      pending = true;
      if (job.value("not_before_ms", std::int64_t{0}) > now_epoch_millis()) {
        continue;
      }
      if (auto claimed = claim(job["id"].get<std::string>())) {
        execute(*claimed);
        return true;
      }
    }
    if (pending) {
      std::this_thread::sleep_for(options_.poll_interval);
    }
    return pending;
  }

  std::optional<Document> claim(const std::string &id) {
    bool won = false;
    auto doc = store_.modify(col::job, id, [&](Document &job) {
      if (job["state"] != "queued" ||
          job.value("not_before_ms", std::int64_t{0}) > now_epoch_millis()) {
        return false;
      }
      job["state"] = "running";
      job["attempts"] = job["attempts"].get<std::int64_t>() + 1;
      job["started_at"] = format_utc(now_epoch_seconds());
      job["heartbeat_ms"] = now_epoch_millis();
      job.erase("finished_at");
      won = true;
      return true;
    });
    if (!won) {
      return std::nullopt;
    }
    std::lock_guard lock(active_mutex_);
    active_.insert(id);
    return doc;
  }

  void heartbeat() {
    std::vector<std::string> ids;
    {
      std::lock_guard lock(active_mutex_);
      ids.assign(active_.begin(), active_.end());
    }
    for (const auto &id : ids) {
      store_.modify(col::job, id, [](Document &job) {
        if (job["state"] != "running") {
          return false;
        }
        job["heartbeat_ms"] = now_epoch_millis();
        return true;
      });
    }
  }

  void execute(const Document &job) {
    const auto id = job["id"].get<std::string>();
    const auto attempt = job["attempts"].get<std::int64_t>();
    const auto dir = log_dir(store_);
    fs::create_directories(dir);
    const auto log_path = dir / (id + ".log");
    std::string error;
    {
      std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
      log << "job " << job["kind"].get<std::string>() << " " << job["target"].get<std::string>()
          << " attempt " << attempt << std::endl;
      JobContext ctx{store_, project_, job, log};
      try {
        const auto handler = options_.handlers.find(kind_);
        if (handler != options_.handlers.end()) {
          handler->second(ctx);
        } else {
          run_builtin(ctx, options_);
        }
        log << "exit code: 0" << std::endl;
      } catch (const WorkerDeath &) {
        std::lock_guard lock(active_mutex_);
        active_.erase(id);
        return;
      } catch (const std::exception &e) {
        error = e.what();
        log << "error: " << error << "\nexit code: 1" << std::endl;
      }
    }
    {
      std::lock_guard lock(active_mutex_);
      active_.erase(id);
    }
    const auto text = read_file(log_path);
    if (error.empty() && log_signals_failure(text)) {
      error = "failure marker in log";
    }
    store_.modify(col::job, id, [&](Document &doc) {
      if (doc["state"] != "running" || doc["attempts"].get<std::int64_t>() != attempt) {
        return false;
      }
      doc["log"] = tail(text);
      doc["log_path"] = log_path.string();
      if (error.empty()) {
        doc["state"] = "done";
        doc["finished_at"] = format_utc(now_epoch_seconds());
        doc.erase("error");
      } else {
        settle_failure(doc, options_, "failed", error);
      }
      return true;
    });
  }

  Store &store_;
  std::string project_;
  std::string run_id_;
  std::string kind_;
  const PipelineOptions &options_;
  std::mutex active_mutex_;
  std::unordered_set<std::string> active_;
};

struct Ref {
  std::string field;
  std::string target;
  bool list = false;
};

std::map<std::string, std::vector<Ref>> ref_fields() {
  std::map<std::string, std::vector<Ref>> out;
  for (const auto &spec : collections()) {
    for (const auto &f : spec.fields) {
      if (f.type == FieldType::ref || f.type == FieldType::ref_list) {
        out[spec.name].push_back({f.name, f.ref_collection, f.type == FieldType::ref_list});
      }
    }
  }
  return out;
}

// Clone of a vcs system, or a scratch extraction of its archive.
struct AuditRepo {
  std::unique_ptr<GitRepo> repo;
  fs::path scratch;

  AuditRepo() = default;
  AuditRepo(const AuditRepo &) = delete;
  AuditRepo &operator=(const AuditRepo &) = delete;
  ~AuditRepo() {
    repo.reset();
    if (!scratch.empty()) {
      std::error_code ec;
      fs::remove_all(scratch, ec);
    }
  }
};

void open_for_audit(const Document &vcs, AuditRepo &out) {
  std::error_code ec;
  const auto clone = str_or(vcs, "clone_path");
  if (!clone.empty() && fs::is_directory(clone, ec)) {
    out.repo = std::make_unique<GitRepo>(clone);
    return;
  }
  const auto archive = str_or(vcs, "archive_ref");
  if (!archive.empty() && fs::is_regular_file(archive, ec)) {
    out.scratch = fs::temp_directory_path() /
                  ("minehub-audit-" + vcs["id"].get<std::string>() + "-" +
                   std::to_string(now_epoch_millis()));
    extract_tar_gz(archive, out.scratch);
    for (const auto &entry : fs::directory_iterator(out.scratch)) {
      if (entry.is_directory()) {
        out.repo = std::make_unique<GitRepo>(entry.path());
        return;
      }
    }
  }
  throw Error(ErrorCode::missing_clone,
              "neither clone nor archive available for " + vcs["url"].get<std::string>());
}

} // namespace

void check_job_kind(std::string_view kind) {
  for (const char *k : job_kinds) {
    if (kind == k) {
      return;
    }
  }
  throw Error(ErrorCode::invalid_argument, "unknown stage: " + std::string(kind));
}

std::unique_ptr<Executor> make_local_executor(int workers) {
  return std::make_unique<LocalExecutor>(workers);
}

bool log_signals_failure(std::string_view log) {
  static const std::regex exit_re(R"(exit code:\s*(-?\d+))");
  static const std::regex marker_re(R"(\b([Pp]anic(ked)?|PANIC|[Aa]bort(ed)?|ABORT|FATAL)\b|terminate called)");
  const std::string text(log);
  for (auto it = std::sregex_iterator(text.begin(), text.end(), exit_re);
       it != std::sregex_iterator(); ++it) {
    if (std::stoll((*it)[1].str()) != 0) {
      return true;
    }
  }
  return std::regex_search(text, marker_re);
}

FailureSummary detect_failures(Store &store, std::string_view run_id,
                               const PipelineOptions &options) {
  FailureSummary summary;
  for (const auto &job : jobs_of(store, run_id)) {
    if (job["state"] != "running") {
      continue;
    }
    const auto id = job["id"].get<std::string>();
    const auto attempt = job["attempts"].get<std::int64_t>();
    const auto log_path = log_dir(store) / (id + ".log");
    std::error_code ec;
    std::string text;
    if (fs::is_regular_file(log_path, ec)) {
      text = read_file(log_path);
    }
    const bool marker = log_signals_failure(text);
    const bool silent =
        now_epoch_millis() - job.value("heartbeat_ms", std::int64_t{0}) >
        options.vanish_timeout.count();
    if (!marker && !silent) {
      continue;
    }
    bool requeued = false;
    store.modify(col::job, id, [&](Document &doc) {
      if (doc["state"] != "running" || doc["attempts"].get<std::int64_t>() != attempt) {
        return false;
      }
      doc["log"] = tail(text);
      doc["log_path"] = log_path.string();
      if (marker) {
        settle_failure(doc, options, "failed", "failure marker in log");
        ++summary.failed;
      } else {
        settle_failure(doc, options, "vanished", "no heartbeat within vanish timeout");
        ++summary.vanished;
      }
      requeued = doc["state"] == "queued";
      return true;
    });
    summary.requeued += requeued;
  }
  return summary;
}

RunSummary run_pipeline(Store &store, std::string_view project,
                        const std::vector<std::string> &stages, const PipelineOptions &options) {
  for (const auto &s : stages) {
    check_job_kind(s);
  }
  RunSummary summary;
  summary.run_id =
      options.run_id.empty() ? "run-" + std::to_string(now_epoch_millis()) : options.run_id;
  if (stages.empty()) {
    return summary;
  }
  if (std::find(stages.begin(), stages.end(), "export") != stages.end() &&
      (options.export_options.release.empty() || options.export_options.output.empty())) {
    throw Error(ErrorCode::invalid_argument, "export stage needs a release and an output path");
  }
  ensure_project(store, project);
  for (const auto &kind : stages) {
    const auto custom = options.targets.find(kind);
    const auto targets = custom != options.targets.end()
                             ? custom->second(store, project)
                             : default_targets(store, project, kind, options);
    StageRunner runner(store, std::string(project), summary.run_id, kind, options);
    auto stage = runner.run(targets);
    spdlog::info("stage {}: {} jobs, {} done, {} failed, {} vanished", kind, stage.jobs,
                 stage.done, stage.failed, stage.vanished);
    summary.stages.push_back(stage);
    if (stage.jobs > 0 &&
        static_cast<double>(stage.failed + stage.vanished) / static_cast<double>(stage.jobs) >
            options.failure_threshold) {
      throw Error(ErrorCode::precondition,
                  "stage " + kind + " aborted: " + std::to_string(stage.failed + stage.vanished) +
                      " of " + std::to_string(stage.jobs) + " jobs failed (run " +
                      summary.run_id + ")");
    }
  }
  return summary;
}

Document check_consistency(Store &store, std::string_view project) {
  const auto project_id = require_project(store, project);
  Document missing_metrics = Document::array();
  std::vector<std::string> missing_commits;
  std::set<std::string> missing_commit_ids;

  for (const auto &vcs : vcs_systems_of(store, project_id)) {
    const auto vcs_id = vcs["id"].get<std::string>();
    AuditRepo audit;
    open_for_audit(vcs, audit);
    const auto &repo = audit.repo;
    for (const auto &hash : repo->rev_list()) {
      const auto commit_id = commit_id_for(vcs_id, hash);
      if (!store.get(col::commit, commit_id)) {
        missing_commits.push_back(hash);
        missing_commit_ids.insert(commit_id);
        continue;
      }
      for (const auto &entry : eligible_tree_entries(*repo, hash)) {
        const auto record_id = make_id(
            col::metric_record,
            {{"commit_id", commit_id}, {"file_id", file_id_for(vcs_id, entry.path)}});
        if (!store.get(col::metric_record, record_id)) {
          missing_metrics.push_back({{"revision", hash}, {"path", entry.path}});
        }
      }
    }
  }
  std::sort(missing_commits.begin(), missing_commits.end());

  // A document whose only dangling refs point at a reported missing commit is
  // a consequence of that finding, not a separate one.
  Document orphans = Document::array();
  for (const auto &[collection, refs] : ref_fields()) {
    for (const auto &doc : store.query(collection)) {
      bool dangling = false;
      for (const auto &ref : refs) {
        if (!doc.contains(ref.field)) {
          continue;
        }
        std::vector<std::string> targets;
        if (ref.list) {
          targets = doc[ref.field].get<std::vector<std::string>>();
        } else {
          targets.push_back(doc[ref.field].get<std::string>());
        }
        for (const auto &t : targets) {
          if (store.get(ref.target, t)) {
            continue;
          }
          if (ref.target == col::commit && missing_commit_ids.contains(t)) {
            continue;
          }
          dangling = true;
        }
      }
      if (dangling) {
        orphans.push_back({{"collection", collection}, {"id", doc["id"]}});
      }
    }
  }

  Document report{{"project_id", project_id},
                  {"created_at", format_utc(now_epoch_seconds())},
                  {"missing_metric_entries", missing_metrics},
                  {"missing_commits", missing_commits},
                  {"orphan_documents", orphans},
                  {"clean", missing_metrics.empty() && missing_commits.empty() && orphans.empty()}};
  const auto id = store.upsert(col::consistency_report, report);
  report["id"] = id;
  return report;
}

RuntimeEstimate estimate_runtime(double commit_count, double minutes_per_commit, int workers) {
  if (commit_count < 0 || minutes_per_commit < 0 || workers < 0 || !std::isfinite(commit_count) ||
      !std::isfinite(minutes_per_commit)) {
    throw Error(ErrorCode::invalid_argument, "runtime estimate inputs must be non-negative");
  }
  RuntimeEstimate e;
  e.serial_days = commit_count * minutes_per_commit / 1440.0;
  e.wall_clock_days = e.serial_days / std::max(workers, 1);
  return e;
}

} // namespace minehub
