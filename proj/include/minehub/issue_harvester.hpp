#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "minehub/store.hpp"

namespace minehub {

enum class TrackerType { jira, github };

std::string_view to_string(TrackerType t);
/// Throws invalid-argument for anything but "jira" / "github".
TrackerType parse_tracker_type(std::string_view s);

struct MappedPerson {
  std::string name;
  std::string email;

  bool operator==(const MappedPerson &) const = default;
};

struct MappedComment {
  std::string external_id;
  std::string created_at;
  std::string body;
  MappedPerson author;
  std::int64_t ordinal = 0;
};

/// Harmonized (Jira-shaped) form of one tracker issue. `issue` carries every
/// Issue field except issue_system_id and the person refs.
struct MappedIssue {
  Document issue;
  std::optional<MappedPerson> reporter;
  std::optional<MappedPerson> assignee;
  std::vector<MappedComment> comments;
};

/// Pure mapping of a tracker-native payload. Returns nullopt for payloads
/// that are not issues (GitHub pull requests). Throws malformed-payload when
/// title or creation date is missing.
std::optional<MappedIssue> map_issue(const Document &raw, TrackerType tracker);

/// GitHub issue comments arrive as separate payloads.
MappedComment map_github_comment(const Document &raw);
/// Issue number a GitHub comment payload belongs to (from issue_url).
std::optional<std::string> github_comment_issue(const Document &raw);

/// GitHub label names → harmonized issue type; unmatched labels give "other".
std::string github_issue_type(const std::vector<std::string> &labels);

struct IssueHarvestSummary {
  std::size_t issues_stored = 0;
  std::size_t comments_stored = 0;
  std::size_t skipped = 0;
  std::vector<std::string> errors;
};

// ---- transport -----------------------------------------------------------

struct HttpResponse {
  int status = 0;
  std::string body;
  std::map<std::string, std::string> headers; // lower-case names
};

class HttpTransport {
public:
  virtual ~HttpTransport() = default;
  virtual HttpResponse get(const std::string &url,
                           const std::map<std::string, std::string> &headers) = 0;
};

/// HTTP(S) transport backed by cpp-httplib.
std::unique_ptr<HttpTransport> make_http_transport();

struct LiveSourceOptions {
  std::string url;   // GitHub repo/API URL or Jira "<base>/browse/<KEY>"
  std::string token; // empty for anonymous access
  int page_size = 100;
  int max_rate_limit_waits = 3;
  std::chrono::seconds backoff_base{5};
  std::function<void(std::chrono::seconds)> sleeper; // defaults to sleep_for
  HttpTransport *transport = nullptr;                 // defaults to httplib
};

/// Ingests a line-delimited fixture of tracker-native payloads. The issue
/// system is keyed by `system_url` (defaults to a file URL of the fixture).
IssueHarvestSummary harvest_issues_fixture(Store &store, const std::filesystem::path &fixture,
                                           TrackerType tracker, std::string_view project,
                                           std::string system_url = {});

/// Incremental live harvest: resumes from the issue system's updated_at
/// watermark, honours rate-limit headers and fails with rate-limited (the
/// watermark stays resumable) once waits are exhausted.
IssueHarvestSummary harvest_issues_live(Store &store, const LiveSourceOptions &options,
                                        TrackerType tracker, std::string_view project);

/// Stores one mapped issue (persons, issue, comments) under `issue_system_id`.
void store_mapped_issue(Store &store, std::string_view issue_system_id, const MappedIssue &mapped,
                        IssueHarvestSummary &summary);

/// Parses `Link: <...>; rel="next"`.
std::optional<std::string> next_link(std::string_view link_header);

} // namespace minehub
