#include "minehub/cli.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "minehub/dataset_exporter.hpp"
#include "minehub/enricher.hpp"
#include "minehub/error.hpp"
#include "minehub/git.hpp"
#include "minehub/issue_harvester.hpp"
#include "minehub/linker.hpp"
#include "minehub/metrics.hpp"
#include "minehub/model.hpp"
#include "minehub/pipeline.hpp"
#include "minehub/text.hpp"
#include "minehub/validation_service.hpp"
#include "minehub/vcs_harvester.hpp"

namespace minehub {

namespace fs = std::filesystem;

namespace {

void emit(const Document &summary) { std::cout << summary.dump() << std::endl; }

std::string env_or_throw(const std::string &var) {
  const char *v = std::getenv(var.c_str());
  if (v == nullptr || *v == '\0') {
    throw Error(ErrorCode::authentication, "environment variable " + var + " is not set");
  }
  return v;
}

struct Options {
  std::optional<std::string> datadir;
  std::string log_level = "info";
  std::string project;

  // harvest-vcs
  std::string url;
  bool archive = false;
  // harvest-issues
  std::string tracker;
  std::string fixture;
  std::string token_env;
  // link / label
  std::string bugfix_keywords;
  std::string refactoring_keywords;
  std::string satd_patterns;
  bool validated_links_only = false;
  // induce / export
  int min_confidence = 0;
  bool validated_only = false;
  // metrics
  std::string revisions = "all";
  int workers = 1;
  // run
  std::string stages;
  std::vector<std::string> sources;
  int max_retries = 2;
  double failure_threshold = 0.2;
  // estimate
  double commits = 0;
  double minutes_per_commit = 0;
  // export
  std::string release;
  int history_days = 0;
  int label_days = 0;
  std::string out;
  // serve
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string static_dir;
};

LinkerConfig linker_config(const Options &o) {
  LinkerConfig c;
  if (!o.bugfix_keywords.empty()) {
    c.bugfix_keywords = read_pattern_file(o.bugfix_keywords);
  }
  return c;
}

EnricherConfig enricher_config(const Options &o) {
  EnricherConfig c;
  if (!o.refactoring_keywords.empty()) {
    c.refactoring_keywords = read_pattern_file(o.refactoring_keywords);
  }
  if (!o.satd_patterns.empty()) {
    c.satd_patterns = read_pattern_file(o.satd_patterns);
  }
  c.admit_unvalidated = !o.validated_links_only;
  return c;
}

Document to_json(const LinkSummary &s) {
  return {{"links_created", s.links_created},
          {"links_total", s.links_total},
          {"validated_untouched", s.validated_untouched},
          {"by_approach", s.by_approach},
          {"unresolved", s.unresolved}};
}

std::size_t run_metrics(Store &store, const Options &o) {
  const auto project_id = require_project(store, o.project);
  std::vector<std::pair<std::shared_ptr<GitRepo>, Document>> work;
  for (const auto &vcs : vcs_systems_of(store, project_id)) {
    auto repo = std::make_shared<GitRepo>(clone_path_of(vcs));
    const auto vcs_id = vcs["id"].get<std::string>();
    if (o.revisions == "all") {
      for (auto &c : store.query(col::commit, Query{}.eq("vcs_system_id", vcs_id))) {
        work.emplace_back(repo, std::move(c));
      }
      continue;
    }
    const bool range = o.revisions.find("..") != std::string::npos;
    std::vector<std::string> hashes;
    if (range) {
      hashes = repo->rev_list(o.revisions);
    } else if (auto h = repo->resolve_commit(o.revisions)) {
      hashes.push_back(*h);
    }
    for (const auto &h : hashes) {
      if (auto c = store.get(col::commit, commit_id_for(vcs_id, h))) {
        work.emplace_back(repo, std::move(*c));
      }
    }
  }
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> files{0};
  std::mutex error_mutex;
  std::string first_error;
  std::vector<std::thread> threads;
  for (int i = 0; i < std::max(o.workers, 1); ++i) {
    threads.emplace_back([&] {
      for (std::size_t k = next++; k < work.size(); k = next++) {
        try {
          files += compute_metrics(store, *work[k].first, work[k].second).files_measured;
        } catch (const std::exception &e) {
          std::lock_guard lock(error_mutex);
          if (first_error.empty()) {
            first_error = e.what();
          }
        }
      }
    });
  }
  for (auto &t : threads) {
    t.join();
  }
  if (!first_error.empty()) {
    throw Error(ErrorCode::git, first_error);
  }
  return files;
}

} // namespace

std::optional<std::string> read_toml_value(const fs::path &file, const std::string &key) {
  std::ifstream in(file);
  if (!in) {
    return std::nullopt;
  }
  std::string line;
  bool top_level = true;
  while (std::getline(in, line)) {
    const auto t = std::string(trim(line));
    if (t.empty() || t.front() == '#') {
      continue;
    }
    if (t.front() == '[') {
      top_level = false;
      continue;
    }
    const auto eq = t.find('=');
    if (!top_level || eq == std::string::npos || trim(t.substr(0, eq)) != key) {
      continue;
    }
    auto value = std::string(trim(t.substr(eq + 1)));
    if (value.size() >= 2 && (value.front() == '"' || value.front() == '\'')) {
      const auto close = value.find(value.front(), 1);
      if (close != std::string::npos) {
        return value.substr(1, close - 1);
      }
    }
    if (const auto hash = value.find(" #"); hash != std::string::npos) {
      value = std::string(trim(value.substr(0, hash)));
    }
    return value;
  }
  return std::nullopt;
}

fs::path resolve_datadir(const std::optional<std::string> &flag, const fs::path &cwd) {
  if (flag && !flag->empty()) {
    return fs::absolute(cwd / *flag);
  }
  if (const char *env = std::getenv("MINEHUB_DATADIR"); env != nullptr && *env != '\0') {
    return fs::absolute(cwd / env);
  }
  if (auto v = read_toml_value(cwd / "minehub.toml", "datadir"); v && !v->empty()) {
    const fs::path p(*v);
    return p.is_absolute() ? p : cwd / p;
  }
  return cwd / "minehub-data";
}

int dispatch(int argc, char **argv) {
  static const auto logger = [] {
    auto l = spdlog::stderr_color_mt("minehub-cli");
    spdlog::set_default_logger(l);
    return l;
  }();
  (void)logger;

  Options o;
  CLI::App app{"minehub: mine git histories and issue trackers into one store"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_option("--datadir", o.datadir, "Store directory");
  app.add_option("--log-level", o.log_level, "trace, debug, info, warn, error or off")
      ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));

  const auto datadir_opt = [&](CLI::App *sub) {
    sub->add_option("--datadir", o.datadir, "Store directory");
  };
  const auto project_opt = [&](CLI::App *sub) {
    sub->add_option("--project", o.project, "Project name")->required();
  };

  auto *harvest_vcs_cmd = app.add_subcommand("harvest-vcs", "Harvest a git repository");
  project_opt(harvest_vcs_cmd);
  datadir_opt(harvest_vcs_cmd);
  harvest_vcs_cmd->add_option("--url", o.url, "Git URL or local path")->required();
  harvest_vcs_cmd->add_flag("--archive", o.archive, "Also write a tar.gz archive of the clone");

  auto *harvest_issues_cmd = app.add_subcommand("harvest-issues", "Harvest an issue tracker");
  project_opt(harvest_issues_cmd);
  datadir_opt(harvest_issues_cmd);
  harvest_issues_cmd->add_option("--tracker", o.tracker, "jira or github")
      ->required()
      ->check(CLI::IsMember({"jira", "github"}));
  harvest_issues_cmd->add_option("--url", o.url, "Tracker URL (names the issue system)");
  harvest_issues_cmd->add_option("--auth-token-env", o.token_env,
                                 "Environment variable holding the API token");
  harvest_issues_cmd->add_option("--fixture", o.fixture, "Line-delimited payload file");

  auto *link_cmd = app.add_subcommand("link", "Link commits to issues");
  project_opt(link_cmd);
  datadir_opt(link_cmd);
  link_cmd->add_option("--bugfix-keywords", o.bugfix_keywords, "Keyword file, one per line");

  auto *induce_cmd = app.add_subcommand("induce", "Detect bug-inducing commits");
  project_opt(induce_cmd);
  datadir_opt(induce_cmd);
  induce_cmd->add_option("--min-confidence", o.min_confidence,
                         "Minimum syntactic + semantic link confidence");
  induce_cmd->add_flag("--validated-only", o.validated_only, "Only links marked valid");

  auto *label_cmd = app.add_subcommand("label", "Label commits");
  project_opt(label_cmd);
  datadir_opt(label_cmd);
  label_cmd->add_option("--refactoring-keywords", o.refactoring_keywords, "Keyword file");
  label_cmd->add_option("--satd-patterns", o.satd_patterns, "SATD pattern file");
  label_cmd->add_flag("--validated-links-only", o.validated_links_only,
                      "Ignore unvalidated links for the bugfix label");

  auto *identify_cmd = app.add_subcommand("identify", "Merge developer identities");
  project_opt(identify_cmd);
  datadir_opt(identify_cmd);

  auto *metrics_cmd = app.add_subcommand("metrics", "Compute file metrics per commit");
  project_opt(metrics_cmd);
  datadir_opt(metrics_cmd);
  metrics_cmd->add_option("--revisions", o.revisions, "all, a revision or a range A..B");
  metrics_cmd->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);

  auto *run_cmd = app.add_subcommand("run", "Run pipeline stages as jobs");
  project_opt(run_cmd);
  datadir_opt(run_cmd);
  run_cmd->add_option("--stages", o.stages, "Comma-separated job kinds")->required();
  run_cmd->add_option("--workers", o.workers, "Worker threads")->check(CLI::PositiveNumber);
  run_cmd->add_option("--source", o.sources, "Repository to harvest (repeatable)");
  run_cmd->add_option("--max-retries", o.max_retries)->check(CLI::NonNegativeNumber);
  run_cmd->add_option("--failure-threshold", o.failure_threshold)->check(CLI::Range(0.0, 1.0));
  run_cmd->add_option("--auth-token-env", o.token_env);
  run_cmd->add_option("--min-confidence", o.min_confidence);
  run_cmd->add_flag("--validated-only", o.validated_only);
  run_cmd->add_option("--release", o.release, "Release for the export stage");
  run_cmd->add_option("--history-days", o.history_days);
  run_cmd->add_option("--label-days", o.label_days);
  run_cmd->add_option("--out", o.out, "Dataset file for the export stage");

  auto *consistency_cmd = app.add_subcommand("check-consistency", "Audit store against clone");
  project_opt(consistency_cmd);
  datadir_opt(consistency_cmd);

  auto *estimate_cmd = app.add_subcommand("estimate", "Estimate computation time");
  estimate_cmd->add_option("--commits", o.commits)->required()->check(CLI::NonNegativeNumber);
  estimate_cmd->add_option("--minutes-per-commit", o.minutes_per_commit)
      ->required()
      ->check(CLI::NonNegativeNumber);
  estimate_cmd->add_option("--workers", o.workers)->check(CLI::PositiveNumber);

  auto *export_cmd = app.add_subcommand("export-dataset", "Export a release-level dataset");
  project_opt(export_cmd);
  datadir_opt(export_cmd);
  export_cmd->add_option("--release", o.release, "Release hash or tag")->required();
  export_cmd->add_option("--history-days", o.history_days)
      ->required()
      ->check(CLI::NonNegativeNumber);
  export_cmd->add_option("--label-days", o.label_days)->required()->check(CLI::NonNegativeNumber);
  export_cmd->add_flag("--validated-only", o.validated_only);
  export_cmd->add_option("--out", o.out, "Output file")->required();

  auto *serve_cmd = app.add_subcommand("serve", "Serve the validation API");
  datadir_opt(serve_cmd);
  serve_cmd->add_option("--port", o.port)->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--host", o.host);
  serve_cmd->add_option("--static", o.static_dir, "Directory of UI assets to serve at /");

  auto *replay_cmd =
      app.add_subcommand("replay-validations", "Re-apply the validation log to the store");
  datadir_opt(replay_cmd);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    if (e.get_exit_code() == 0) {
      return app.exit(e);
    }
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }
  spdlog::set_level(spdlog::level::from_str(o.log_level));

  try {
    if (estimate_cmd->parsed()) {
      const auto e = estimate_runtime(o.commits, o.minutes_per_commit, o.workers);
      emit({{"serial_days", e.serial_days}, {"wall_clock_days", e.wall_clock_days}});
      return 0;
    }
    if (harvest_issues_cmd->parsed() && o.fixture.empty() &&
        (o.url.empty() || o.token_env.empty())) {
      std::cerr << "harvest-issues needs --fixture or --url with --auth-token-env\n\n"
                << harvest_issues_cmd->help();
      return 2;
    }

    const auto datadir = resolve_datadir(o.datadir, fs::current_path());
    Store store(datadir);

    if (harvest_vcs_cmd->parsed()) {
      const auto s = harvest_vcs(store, o.url, o.project);
      Document out{{"commits_stored", s.commits_stored},
                   {"files_stored", s.files_stored},
                   {"actions_stored", s.actions_stored}};
      if (o.archive) {
        const auto project_id = require_project(store, o.project);
        std::error_code ec;
        const auto url = fs::is_directory(o.url, ec) ? fs::canonical(o.url).string() : o.url;
        const auto vcs_id = make_id(col::vcs_system,
                                    {{"project_id", project_id}, {"url", url}, {"vcs_type", "git"}});
        out["archive"] = archive_repository(store, vcs_id).string();
      }
      emit(out);
    } else if (harvest_issues_cmd->parsed()) {
      const auto tracker = parse_tracker_type(o.tracker);
      IssueHarvestSummary s;
      if (!o.fixture.empty()) {
        s = harvest_issues_fixture(store, o.fixture, tracker, o.project, o.url);
      } else {
        LiveSourceOptions live;
        live.url = o.url;
        live.token = env_or_throw(o.token_env);
        s = harvest_issues_live(store, live, tracker, o.project);
      }
      emit({{"issues_stored", s.issues_stored},
            {"comments_stored", s.comments_stored},
            {"skipped", s.skipped},
            {"errors", s.errors}});
    } else if (link_cmd->parsed()) {
      emit(to_json(link_commits_to_issues(store, o.project, linker_config(o))));
    } else if (induce_cmd->parsed()) {
      const auto s = detect_inducing(store, o.project, {o.min_confidence, o.validated_only});
      emit({{"fix_commits", s.fix_commits},
            {"inducing_links", s.inducing_links},
            {"suspects", s.suspects},
            {"filtered", s.filtered},
            {"errors", s.errors}});
    } else if (label_cmd->parsed()) {
      const auto s = label_commits(store, o.project, enricher_config(o));
      emit({{"commits", s.commits}, {"labels", s.applied}});
    } else if (identify_cmd->parsed()) {
      const auto s = merge_identities(store, o.project);
      emit({{"persons", s.persons}, {"identities", s.identities}});
    } else if (metrics_cmd->parsed()) {
      emit({{"files_measured", run_metrics(store, o)}});
    } else if (run_cmd->parsed()) {
      PipelineOptions p;
      p.workers = o.workers;
      p.max_retries = o.max_retries;
      p.failure_threshold = o.failure_threshold;
      p.vcs_sources = o.sources;
      if (!o.token_env.empty()) {
        p.auth_token = env_or_throw(o.token_env);
      }
      p.induce = {o.min_confidence, o.validated_only};
      p.export_options = {o.release, o.out, o.history_days, o.label_days};
      std::vector<std::string> stages;
      for (const auto &s : split(o.stages, ',')) {
        if (!is_blank(s)) {
          stages.emplace_back(trim(s));
        }
      }
      const auto r = run_pipeline(store, o.project, stages, p);
      Document out{{"run_id", r.run_id}, {"stages", Document::array()}};
      for (const auto &s : r.stages) {
        out["stages"].push_back({{"kind", s.kind},
                                 {"jobs", s.jobs},
                                 {"done", s.done},
                                 {"failed", s.failed},
                                 {"vanished", s.vanished},
                                 {"retries", s.retries}});
      }
      emit(out);
    } else if (consistency_cmd->parsed()) {
      emit(check_consistency(store, o.project));
    } else if (export_cmd->parsed()) {
      const auto s = export_release(store, o.project,
                                    {o.release, o.history_days, o.label_days, o.validated_only},
                                    o.out);
      emit({{"rows", s.rows},
            {"buggy_rows", s.buggy_rows},
            {"release", s.release_hash},
            {"out", o.out}});
    } else if (serve_cmd->parsed()) {
      serve(store, o.host, o.port, o.static_dir);
    } else if (replay_cmd->parsed()) {
      const auto s = replay_validation_log(store);
      emit({{"applied", s.applied}, {"skipped", s.skipped}});
    }
  } catch (const Error &e) {
    spdlog::error("{}", e.what());
    std::cout << Document{{"error", to_string(e.code())}, {"message", e.what()}}.dump()
              << std::endl;
    return 1;
  } catch (const std::exception &e) {
    spdlog::error("{}", e.what());
    std::cout << Document{{"error", "internal"}, {"message", e.what()}}.dump() << std::endl;
    return 1;
  }
  return 0;
}

} // namespace minehub
