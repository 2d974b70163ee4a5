#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace minehub {
class Store;
}

namespace minehub::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
  explicit TempDir(std::string_view tag = "t");
  ~TempDir();
  TempDir(const TempDir &) = delete;
  TempDir &operator=(const TempDir &) = delete;

  const std::filesystem::path &path() const { return path_; }
  std::filesystem::path operator/(std::string_view rel) const { return path_ / rel; }

private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path &p);
void write_file(const std::filesystem::path &p, std::string_view content);

struct Author {
  std::string name = "Ann Lee";
  std::string email = "ann@example.org";
};

/// A git repository built step by step with pinned author/committer dates so
/// hashes are reproducible.
class ScriptedRepo {
public:
  explicit ScriptedRepo(std::filesystem::path dir);

  const std::filesystem::path &dir() const { return dir_; }

  std::string git(const std::vector<std::string> &args) const;

  void write(std::string_view path, std::string_view content) const;
  void remove(std::string_view path) const;
  void move(std::string_view from, std::string_view to) const;

  /// Stages everything and commits; `date` is "YYYY-MM-DDTHH:MM:SSZ".
  std::string commit(std::string_view message, std::string_view date, const Author &author = {});
  void checkout(std::string_view branch, bool create = false) const;
  std::string merge(std::string_view branch, std::string_view message, std::string_view date,
                    const Author &author = {});
  void tag(std::string_view name, std::string_view rev) const;

private:
  std::vector<std::string> env_for(std::string_view date, const Author &author) const;

  std::filesystem::path dir_;
};

/// Output lines of a plain `git` call in `dir`.
std::vector<std::string> git_lines(const std::filesystem::path &dir,
                                   const std::vector<std::string> &args);

// ---- scripted fixtures --------------------------------------------------

struct LinearFixture {
  std::vector<std::string> commits; // oldest first
};
LinearFixture build_linear(ScriptedRepo &repo);

struct MergeFixture {
  std::string base, feature, mainline, merge;
};
MergeFixture build_branch_merge(ScriptedRepo &repo);

struct RenameFixture {
  std::vector<std::string> commits;
  std::vector<std::string> paths; // path after each commit
};
RenameFixture build_rename_chain(ScriptedRepo &repo);

/// C1 adds src/Calc.java with a faulty line, C2 touches another file, C3
/// fixes the faulty line with "Fix PROJ-1".
struct InducingFixture {
  std::string c1, c2, c3;
  int faulty_line = 0;
};
InducingFixture build_inducing(ScriptedRepo &repo);

/// Fix that only adds lines.
struct AdditionFixture {
  std::string c1, fix;
};
AdditionFixture build_pure_addition(ScriptedRepo &repo);

/// Twelve commits referencing six DERBY issues, with the hand-labelled
/// (commit hash, issue key) pairs.
struct LinkingFixture {
  std::vector<std::string> commits;
  std::vector<std::pair<std::string, std::string>> expected;
  std::string multi_link_commit;
  std::vector<nlohmann::json> issues;
};
LinkingFixture build_linking(ScriptedRepo &repo);

/// Release "v1" followed by three fixes of lines present at the release,
/// landing 41, 131 and 235 days after it.
struct DatasetFixture {
  std::string release;
  std::vector<std::string> fixes;
  std::vector<nlohmann::json> issues;
};
DatasetFixture build_dataset(ScriptedRepo &repo);

/// One Jira issue payload in the shape the REST API returns.
nlohmann::json jira_issue(std::string_view key, std::string_view type, std::string_view created,
                          std::string_view updated, std::string_view summary = "failure",
                          std::string_view resolution = "Fixed");

/// Harvests `repo_dir` and a Jira fixture of `issues` into project "p".
void ingest(Store &store, const std::filesystem::path &repo_dir,
            const std::vector<nlohmann::json> &issues, const std::filesystem::path &scratch);

void write_ndjson(const std::filesystem::path &p, const std::vector<nlohmann::json> &docs);

/// Bytes of every collection log of `datadir`, keyed by file name, skipping
/// `excluded` collections.
std::map<std::string, std::string> snapshot(const std::filesystem::path &datadir,
                                            const std::vector<std::string> &excluded = {});

} // namespace minehub::testing
