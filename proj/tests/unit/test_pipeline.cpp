#include <doctest.h>

#include <atomic>
#include <map>
#include <mutex>

#include "minehub/error.hpp"
#include "minehub/issue_harvester.hpp"
#include "minehub/model.hpp"
#include "minehub/pipeline.hpp"
#include "minehub/text.hpp"
#include "minehub/vcs_harvester.hpp"

#include "../support/fixture.hpp"

using namespace minehub;
using namespace minehub::testing;
using namespace std::chrono_literals;

namespace {

PipelineOptions fast_options(int workers = 2) {
  PipelineOptions o;
  o.workers = workers;
  o.backoff_base = 1ms;
  o.heartbeat_interval = 5ms;
  o.poll_interval = 5ms;
  return o;
}

std::vector<std::string> numbered(int n) {
  std::vector<std::string> out;
  for (int i = 0; i < n; ++i) out.push_back("t" + std::to_string(i));
  return out;
}

std::map<std::string, std::string> job_states(const Store &store) {
  std::map<std::string, std::string> out;
  for (const auto &j : store.query(col::job)) out[j["target"]] = j["state"];
  return out;
}

const std::vector<std::string> all_stages{"harvest_vcs", "harvest_issues", "metrics_commit", "link",
                                          "induce",      "label",          "identify"};

void full_run(const std::filesystem::path &data, const ScriptedRepo &repo,
              const std::filesystem::path &issues, int workers, int rounds) {
  Store store(data);
  harvest_issues_fixture(store, issues, TrackerType::jira, "p",
                         "https://issues.example.org/browse/PROJ");
  auto options = fast_options(workers);
  options.vcs_sources = {repo.dir().string()};
  for (int i = 0; i < rounds; ++i) {
    options.run_id = "run-" + std::to_string(i);
    run_pipeline(store, "p", all_stages, options);
  }
}

} // namespace

TEST_SUITE("pipeline") {

TEST_CASE("runtime estimate arithmetic") {
  const auto e = estimate_runtime(20000, 30, 1);
  CHECK(e.serial_days == doctest::Approx(20000.0 * 30 / 60 / 24));
  CHECK(e.wall_clock_days == doctest::Approx(e.serial_days));
  CHECK(estimate_runtime(20000, 30, 8).wall_clock_days == doctest::Approx(e.serial_days / 8));
  CHECK_THROWS_AS(estimate_runtime(-1, 30, 1), Error);
  CHECK(estimate_runtime(48, 30, 0).wall_clock_days == doctest::Approx(1.0));
  CHECK_THROWS_AS(estimate_runtime(1, -30, 1), Error);
}

TEST_CASE("failure markers") {
  CHECK(log_signals_failure("step\nexit code: 1\n"));
  CHECK(log_signals_failure("thread panicked at x"));
  CHECK(log_signals_failure("FATAL: out of memory"));
  CHECK(log_signals_failure("terminate called after throwing"));
  CHECK(log_signals_failure("Aborted (core dumped)"));
  CHECK_FALSE(log_signals_failure("exit code: 0\n"));
  CHECK_FALSE(log_signals_failure("processed 10 files"));
  CHECK_FALSE(log_signals_failure("fatalistic"));
}

TEST_CASE("stage names are checked") {
  CHECK_NOTHROW(check_job_kind("induce"));
  CHECK_THROWS_AS(check_job_kind("compile"), Error);
  Store store(std::make_unique<MemoryEngine>());
  CHECK_THROWS_AS(run_pipeline(store, "p", {"compile"}, fast_options()), Error);
}

TEST_CASE("transient failures are retried with a log per attempt") {
  TempDir dir("retry");
  Store store(dir.path());
  std::mutex m;
  std::map<std::string, int> calls;
  auto options = fast_options(4);
  options.targets["link"] = [](Store &, std::string_view) { return numbered(6); };
  options.handlers["link"] = [&](JobContext &ctx) {
    const auto target = ctx.job["target"].get<std::string>();
    std::lock_guard lock(m);
    if (++calls[target] == 1 && target < "t3") throw std::runtime_error("flaky");
    ctx.log << "ok " << target << "\n";
  };
  const auto s = run_pipeline(store, "p", {"link"}, options);
  REQUIRE(s.stages.size() == 1);
  CHECK(s.stages[0].jobs == 6);
  CHECK(s.stages[0].done == 6);
  CHECK(s.stages[0].retries == 3);
  for (const auto &j : store.query(col::job)) {
    CHECK(j["state"] == "done");
    const auto log = read_file(j["log_path"].get<std::string>());
    CHECK(log.find("exit code: 0") != std::string::npos);
    CHECK(log.find("flaky") == std::string::npos);
    CHECK(j["attempts"] == (j["target"] < "t3" ? 2 : 1));
  }
}

TEST_CASE("persistent failures below the threshold leave the stage complete") {
  TempDir dir("threshold-ok");
  Store store(dir.path());
  auto options = fast_options(3);
  options.max_retries = 1;
  options.targets["label"] = [](Store &, std::string_view) { return numbered(10); };
  options.handlers["label"] = [](JobContext &ctx) {
    if (ctx.job["target"] == "t7") throw std::runtime_error("broken input");
  };
  const auto s = run_pipeline(store, "p", {"label"}, options);
  CHECK(s.stages[0].failed == 1);
  CHECK(s.stages[0].done == 9);
  const auto states = job_states(store);
  CHECK(states.at("t7") == "failed");
  const auto failed = store.find_one(col::job, Query{}.eq("target", "t7")).value();
  CHECK(failed["attempts"] == 2);
  CHECK(failed["error"].get<std::string>().find("broken input") != std::string::npos);
}

TEST_CASE("failures above the threshold abort the run") {
  TempDir dir("threshold-abort");
  Store store(dir.path());
  auto options = fast_options(3);
  options.max_retries = 0;
  options.targets["label"] = [](Store &, std::string_view) { return numbered(10); };
  options.handlers["label"] = [](JobContext &ctx) {
    if (ctx.job["target"] < "t3") throw std::runtime_error("broken");
  };
  bool identify_ran = false;
  options.targets["identify"] = [](Store &, std::string_view) { return numbered(1); };
  options.handlers["identify"] = [&](JobContext &) { identify_ran = true; };
  try {
    run_pipeline(store, "p", {"label", "identify"}, options);
    FAIL("expected precondition");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::precondition);
  }
  CHECK_FALSE(identify_ran);
}

TEST_CASE("failure markers in the log fail a job that returned normally") {
  TempDir dir("marker");
  Store store(dir.path());
  auto options = fast_options(1);
  options.max_retries = 0;
  options.failure_threshold = 1.0;
  options.targets["link"] = [](Store &, std::string_view) { return numbered(2); };
  options.handlers["link"] = [](JobContext &ctx) {
    if (ctx.job["target"] == "t1") ctx.log << "FATAL: disk full\n";
  };
  const auto s = run_pipeline(store, "p", {"link"}, options);
  CHECK(s.stages[0].failed == 1);
  CHECK(job_states(store).at("t1") == "failed");
}

TEST_CASE("a worker that dies is detected as vanished and the job is re-run") {
  TempDir dir("vanish");
  Store store(dir.path());
  auto options = fast_options(2);
  options.vanish_timeout = 150ms;
  std::atomic<int> deaths{0};
  options.targets["identify"] = [](Store &, std::string_view) { return numbered(3); };
  options.handlers["identify"] = [&](JobContext &ctx) {
    if (ctx.job["target"] == "t1" && ctx.job["attempts"] == 1) {
      ++deaths;
      throw WorkerDeath();
    }
  };
  const auto s = run_pipeline(store, "p", {"identify"}, options);
  CHECK(deaths == 1);
  CHECK(s.stages[0].done == 3);
  CHECK(s.stages[0].vanished == 0);
  CHECK(s.stages[0].retries == 1);
  CHECK(store.find_one(col::job, Query{}.eq("target", "t1")).value()["attempts"] == 2);
}

TEST_CASE("a job that keeps vanishing ends vanished") {
  TempDir dir("vanish-final");
  Store store(dir.path());
  auto options = fast_options(1);
  options.vanish_timeout = 100ms;
  options.max_retries = 1;
  options.failure_threshold = 1.0;
  options.targets["identify"] = [](Store &, std::string_view) { return numbered(1); };
  options.handlers["identify"] = [](JobContext &) { throw WorkerDeath(); };
  const auto s = run_pipeline(store, "p", {"identify"}, options);
  CHECK(s.stages[0].vanished == 1);
  CHECK(job_states(store).at("t0") == "vanished");
}

TEST_CASE("detect_failures inspects logs and heartbeats of running jobs") {
  TempDir dir("detect");
  Store store(dir.path());
  const auto now = now_epoch_millis();
  auto job = [&](std::string target, std::int64_t heartbeat) {
    return store.upsert(col::job, {{"run_id", "r"}, {"kind", "link"}, {"target", target},
                                   {"state", "running"}, {"attempts", 1}, {"heartbeat_ms", heartbeat}});
  };
  const auto crashed = job("a", now);
  const auto silent = job("b", now - 60000);
  const auto healthy = job("c", now);
  std::filesystem::create_directories(dir / "logs");
  write_file(dir / "logs" / (crashed + ".log"), "starting\nSegmentation fault\nexit code: 139\n");
  write_file(dir / "logs" / (healthy + ".log"), "starting\n");
  PipelineOptions options;
  options.max_retries = 0;
  options.vanish_timeout = 1000ms;
  const auto s = detect_failures(store, "r", options);
  CHECK(s.failed == 1);
  CHECK(s.vanished == 1);
  CHECK(store.get(col::job, crashed).value()["state"] == "failed");
  CHECK(store.get(col::job, silent).value()["state"] == "vanished");
  CHECK(store.get(col::job, healthy).value()["state"] == "running");
}

TEST_CASE("re-running every stage with 1 or 8 workers gives identical stores") {
  TempDir dir("workers");
  ScriptedRepo repo(dir / "repo");
  build_inducing(repo);
  repo.write("lib/util.py", "import os\n\n# TODO: tidy\ndef f():\n    return os.sep\n");
  repo.commit("Add util", "2020-02-05T10:00:00Z", {"A. Lee", "ann@example.org"});
  write_ndjson(dir / "issues.jsonl",
               {jira_issue("PROJ-1", "Bug", "2020-01-20T10:00:00.000+0000", "2020-02-02T10:00:00.000+0000")});

  full_run(dir / "one", repo, dir / "issues.jsonl", 1, 1);
  const auto single = snapshot(dir / "one", {"job"});
  full_run(dir / "one", repo, dir / "issues.jsonl", 1, 1);
  CHECK(snapshot(dir / "one", {"job"}) == single);

  full_run(dir / "eight", repo, dir / "issues.jsonl", 8, 2);
  CHECK(snapshot(dir / "eight", {"job"}) == single);
  CHECK(single.at("inducing_link.ndjson").size() > 0);
  CHECK(single.at("metric_record.ndjson").size() > 0);
}

TEST_CASE("consistency audit reports exactly the injected deletions") {
  TempDir dir("audit");
  ScriptedRepo repo(dir / "repo");
  const auto f = build_inducing(repo);
  Store store(dir / "data");
  ingest(store, repo.dir(),
         {jira_issue("PROJ-1", "Bug", "2020-01-20T10:00:00.000+0000", "2020-02-02T10:00:00.000+0000")},
         dir.path());
  auto options = fast_options(2);
  run_pipeline(store, "p", {"metrics_commit", "link", "induce", "label", "identify"}, options);
  const auto clean = check_consistency(store, "p");
  CHECK(clean["clean"] == true);
  CHECK(clean["missing_commits"].empty());
  CHECK(clean["missing_metric_entries"].empty());
  CHECK(clean["orphan_documents"].empty());

  const auto c3 = store.find_one(col::commit, Query{}.eq("revision_hash", f.c3)).value();
  const auto c2 = store.find_one(col::commit, Query{}.eq("revision_hash", f.c2)).value();
  const auto readme = store.find_one(col::file, Query{}.eq("path", "README.md")).value();
  const auto metric = store.find_one(col::metric_record,
                                     Query{}.eq("commit_id", c2["id"]).eq("file_id", readme["id"]));
  REQUIRE(metric.has_value());
  REQUIRE(store.remove(col::metric_record, (*metric)["id"].get<std::string>()));
  REQUIRE(store.remove(col::commit, c3["id"].get<std::string>()));

  const auto report = check_consistency(store, "p");
  CHECK(report["clean"] == false);
  CHECK(report["missing_commits"] == Document::array({f.c3}));
  CHECK(report["missing_metric_entries"] ==
        Document::array({{{"revision", f.c2}, {"path", "README.md"}}}));
  CHECK(report["orphan_documents"].empty());
  CHECK(store.count(col::consistency_report) == 1);
}

TEST_CASE("consistency audit falls back to the archive") {
  TempDir dir("audit-archive");
  ScriptedRepo repo(dir / "repo");
  build_linear(repo);
  Store store(dir / "data");
  ingest(store, repo.dir(), {}, dir.path());
  run_pipeline(store, "p", {"metrics_commit"}, fast_options());
  const auto vcs = store.query(col::vcs_system).front();
  archive_repository(store, vcs["id"].get<std::string>());
  store.modify(col::vcs_system, vcs["id"].get<std::string>(), [](Document &d) {
    d["clone_path"] = "/nonexistent/clone";
    return true;
  });
  CHECK(check_consistency(store, "p")["clean"] == true);
}

TEST_CASE("orphans are reported") {
  TempDir dir("orphans");
  ScriptedRepo repo(dir / "repo");
  build_linear(repo);
  Store store(dir / "data");
  ingest(store, repo.dir(), {}, dir.path());
  run_pipeline(store, "p", {"metrics_commit"}, fast_options());
  const auto file = store.find_one(col::file, Query{}.eq("path", "notes.txt")).value();
  store.remove(col::file, file["id"].get<std::string>());
  const auto report = check_consistency(store, "p");
  CHECK(report["clean"] == false);
  CHECK(report["missing_commits"].empty());
  CHECK(report["orphan_documents"].size() == 2); // its file action and metric record
  for (const auto &o : report["orphan_documents"])
    CHECK((o["collection"] == "file_action" || o["collection"] == "metric_record"));
}

} // TEST_SUITE
