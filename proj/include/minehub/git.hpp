#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "minehub/process.hpp"
#include "minehub/text.hpp"

namespace minehub {

struct GitSignature {
  std::string name;
  std::string email;
  Timestamp when;
};

struct GitCommitInfo {
  std::string hash;
  std::vector<std::string> parents;
  GitSignature author;
  GitSignature committer;
  std::string message;
};

struct TreeEntry {
  std::string mode;
  std::string type; // blob, tree, commit (submodule)
  std::string object;
  std::string path;
};

/// Read access to one local git repository through the `git` executable.
/// Copies share a single `cat-file --batch` reader.
class GitRepo {
public:
  /// Throws missing-clone when `dir` does not exist and git when it is not a
  /// repository.
  explicit GitRepo(std::filesystem::path dir);

  const std::filesystem::path &dir() const { return dir_; }

  std::string run(const std::vector<std::string> &args) const;
  ProcessResult try_run(const std::vector<std::string> &args, std::string input = {}) const;

  /// (branch name, head hash) for refs/heads, sorted by name.
  std::vector<std::pair<std::string, std::string>> branch_heads() const;
  /// Hashes reachable from `rev` (or from all branches when empty).
  std::vector<std::string> rev_list(std::string_view rev = {}) const;
  std::vector<GitCommitInfo> commits_on_branches() const;
  std::optional<std::string> resolve_commit(std::string_view rev) const;
  std::vector<std::string> parents(std::string_view hash) const;
  std::vector<TreeEntry> list_tree(std::string_view rev) const;

  /// Object content by name ("<sha>" or "<rev>:<path>"); nullopt if missing.
  std::optional<std::string> read_object(std::string_view name) const;
  std::optional<std::string> file_at(std::string_view rev, std::string_view path) const;
  std::optional<std::string> blob_id(std::string_view rev, std::string_view path) const;

private:
  struct BatchReader;

  std::filesystem::path dir_;
  std::shared_ptr<BatchReader> batch_;
};

/// Git's heuristic: a NUL byte within the first 8000 bytes.
bool looks_binary(std::string_view content);

bool is_full_hash(std::string_view s);

/// Parses the "<unix-seconds> <+hhmm>" form of `--date=raw`.
Timestamp parse_raw_git_date(std::string_view raw);

} // namespace minehub
