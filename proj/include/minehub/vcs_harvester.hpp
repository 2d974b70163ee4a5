#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "minehub/git.hpp"
#include "minehub/store.hpp"

namespace minehub {

struct DiffHunk {
  int old_start = 0;
  int old_lines = 0;
  int new_start = 0;
  int new_lines = 0;
  std::string content; // body lines with their ' ', '+', '-', '\' prefixes
  int added = 0;
  int removed = 0;
};

struct FileChange {
  char status = 'M'; // A, M, D, R, C
  std::string old_path;
  std::string new_path;
  bool is_binary = false;
  std::vector<DiffHunk> hunks;
  int lines_added = 0;
  int lines_deleted = 0;
};

/// Parses the `@@` hunks of one unified-diff section.
std::vector<DiffHunk> parse_unified_hunks(std::string_view patch);

/// Parses `git diff-tree -r -z --raw -p` output for a single commit.
std::vector<FileChange> parse_raw_patch(std::string_view output);

/// File changes of `hash` against its first parent (the empty tree for a
/// root commit), with 60% rename/copy detection.
std::vector<FileChange> diff_commit(const GitRepo &repo, std::string_view hash);

struct HarvestSummary {
  std::size_t commits_stored = 0;
  std::size_t files_stored = 0;
  std::size_t actions_stored = 0;
};

/// Harvests every commit reachable from any branch of `source` (local path or
/// clonable URL) into `project`. URLs are mirrored under
/// `<datadir>/clones/`. Re-running is a no-op on an unchanged repository.
HarvestSummary harvest_vcs(Store &store, std::string_view source, std::string_view project);

/// Writes a gzip-compressed ustar archive of a bare mirror of the clone to
/// `<datadir>/archives/<vcs-system-id>.tar.gz` and records it as archive_ref.
std::filesystem::path archive_repository(Store &store, std::string_view vcs_system_id);

struct BlameOrigin {
  std::string commit;
  std::string path;
  int line = 0;

  bool operator==(const BlameOrigin &) const = default;
};

/// For each requested 1-based line of `path` at `revision`, the commit that
/// last changed it (following renames) and the line's number there.
std::map<int, BlameOrigin> blame(const GitRepo &repo, std::string_view revision,
                                 std::string_view path, const std::set<int> &lines);

std::map<int, BlameOrigin> blame(const Store &store, std::string_view vcs_system_id,
                                 std::string_view revision, std::string_view path,
                                 const std::set<int> &lines);

} // namespace minehub
