#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "minehub/enricher.hpp"
#include "minehub/linker.hpp"
#include "minehub/store.hpp"

namespace minehub {

inline constexpr const char *job_kinds[] = {"harvest_vcs", "harvest_issues", "metrics_commit",
                                            "link",        "induce",         "label",
                                            "identify",    "export"};

/// Throws invalid-argument for unknown kinds.
void check_job_kind(std::string_view kind);

/// Thrown by a job handler to simulate a worker that disappears mid-job: the
/// job is left running without further heartbeats.
struct WorkerDeath : std::runtime_error {
  WorkerDeath() : std::runtime_error("worker died") {}
};

struct JobContext {
  Store &store;
  std::string project;
  Document job;
  std::ostream &log;
};

using JobHandler = std::function<void(JobContext &)>;

/// Runs claimed jobs. The shipped backend is an in-process worker pool;
/// remote batch systems would implement the same seam.
class Executor {
public:
  virtual ~Executor() = default;
  /// Calls `work` from each worker until it returns false.
  virtual void run(const std::function<bool()> &work) = 0;
};

std::unique_ptr<Executor> make_local_executor(int workers);

struct ExportStageOptions {
  std::string release;
  std::string output;
  int history_window_days = 180;
  int label_window_days = 180;
};

struct PipelineOptions {
  int workers = 1;
  int max_retries = 2;
  double failure_threshold = 0.2;
  std::chrono::milliseconds backoff_base{5000};
  std::chrono::milliseconds heartbeat_interval{10000};
  std::chrono::milliseconds vanish_timeout{120000};
  std::chrono::milliseconds poll_interval{20};
  std::string run_id; // generated when empty
  std::vector<std::string> vcs_sources;
  std::string auth_token; // live issue harvests
  InduceOptions induce;
  LinkerConfig linker;
  EnricherConfig enricher;
  ExportStageOptions export_options;
  /// Replaces the built-in handler for a job kind.
  std::map<std::string, JobHandler> handlers;
  /// Replaces target discovery for a job kind.
  std::map<std::string, std::function<std::vector<std::string>(Store &, std::string_view)>>
      targets;
};

struct StageSummary {
  std::string kind;
  std::size_t jobs = 0;
  std::size_t done = 0;
  std::size_t failed = 0;
  std::size_t vanished = 0;
  std::size_t retries = 0;
};

struct RunSummary {
  std::string run_id;
  std::vector<StageSummary> stages;
};

/// Runs each stage's jobs to a terminal state before starting the next.
/// Throws precondition when a stage's failed/vanished fraction exceeds the
/// failure threshold.
RunSummary run_pipeline(Store &store, std::string_view project,
                        const std::vector<std::string> &stages, const PipelineOptions &options);

struct FailureSummary {
  std::size_t failed = 0;
  std::size_t vanished = 0;
  std::size_t requeued = 0;
};

/// True when a log contains a failure marker: "exit code: N" with N != 0,
/// panic, abort, FATAL or an uncaught-exception terminate message.
bool log_signals_failure(std::string_view log);

/// Marks running jobs of `run_id` failed when their log carries a failure
/// marker, and vanished when their heartbeat is older than the timeout.
/// Vanished jobs with attempts left are re-enqueued.
FailureSummary detect_failures(Store &store, std::string_view run_id,
                               const PipelineOptions &options);

/// Audits the clone against the store and persists the report.
Document check_consistency(Store &store, std::string_view project);

struct RuntimeEstimate {
  double serial_days = 0;
  double wall_clock_days = 0;
};

RuntimeEstimate estimate_runtime(double commit_count, double minutes_per_commit, int workers);

} // namespace minehub
