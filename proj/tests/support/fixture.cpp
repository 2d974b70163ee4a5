#include "fixture.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <unistd.h>

#include "minehub/issue_harvester.hpp"
#include "minehub/process.hpp"
#include "minehub/store.hpp"
#include "minehub/text.hpp"
#include "minehub/vcs_harvester.hpp"

namespace fs = std::filesystem;

namespace minehub::testing {

TempDir::TempDir(std::string_view tag) {
  static std::atomic<int> counter{0};
  const auto base = fs::temp_directory_path() / "minehub-tests";
  fs::create_directories(base);
  path_ = base / (std::string(tag) + "-" + std::to_string(::getpid()) + "-" +
                  std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string read_file(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path &p, std::string_view content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

ScriptedRepo::ScriptedRepo(fs::path dir) : dir_(std::move(dir)) {
  fs::create_directories(dir_);
  git({"init", "-q", "-b", "main"});
  git({"config", "user.name", "Fixture"});
  git({"config", "user.email", "fixture@example.org"});
  git({"config", "commit.gpgsign", "false"});
}

std::string ScriptedRepo::git(const std::vector<std::string> &args) const {
  std::vector<std::string> argv{"git"};
  argv.insert(argv.end(), args.begin(), args.end());
  ProcessOptions opts;
  opts.cwd = dir_;
  opts.extra_env = {"GIT_CONFIG_NOSYSTEM=1"};
  auto r = run_process(argv, opts);
  if (r.exit_code != 0) throw std::runtime_error("git " + args.front() + " failed: " + r.err);
  return r.out;
}

void ScriptedRepo::write(std::string_view path, std::string_view content) const {
  write_file(dir_ / path, content);
}

void ScriptedRepo::remove(std::string_view path) const { git({"rm", "-q", std::string(path)}); }

void ScriptedRepo::move(std::string_view from, std::string_view to) const {
  fs::create_directories((dir_ / to).parent_path());
  git({"mv", std::string(from), std::string(to)});
}

std::vector<std::string> ScriptedRepo::env_for(std::string_view date, const Author &author) const {
  const std::string d(date);
  return {"GIT_CONFIG_NOSYSTEM=1",
          "GIT_AUTHOR_NAME=" + author.name,
          "GIT_AUTHOR_EMAIL=" + author.email,
          "GIT_COMMITTER_NAME=" + author.name,
          "GIT_COMMITTER_EMAIL=" + author.email,
          "GIT_AUTHOR_DATE=" + d,
          "GIT_COMMITTER_DATE=" + d};
}

std::string ScriptedRepo::commit(std::string_view message, std::string_view date,
                                 const Author &author) {
  git({"add", "-A"});
  ProcessOptions opts;
  opts.cwd = dir_;
  opts.extra_env = env_for(date, author);
  auto r = run_process({"git", "commit", "-q", "--allow-empty", "-m", std::string(message)}, opts);
  if (r.exit_code != 0) throw std::runtime_error("git commit failed: " + r.err);
  return std::string(trim(git({"rev-parse", "HEAD"})));
}

void ScriptedRepo::checkout(std::string_view branch, bool create) const {
  if (create)
    git({"checkout", "-q", "-b", std::string(branch)});
  else
    git({"checkout", "-q", std::string(branch)});
}

std::string ScriptedRepo::merge(std::string_view branch, std::string_view message,
                                std::string_view date, const Author &author) {
  ProcessOptions opts;
  opts.cwd = dir_;
  opts.extra_env = env_for(date, author);
  auto r = run_process(
      {"git", "merge", "-q", "--no-ff", "-m", std::string(message), std::string(branch)}, opts);
  if (r.exit_code != 0) throw std::runtime_error("git merge failed: " + r.err);
  return std::string(trim(git({"rev-parse", "HEAD"})));
}

void ScriptedRepo::tag(std::string_view name, std::string_view rev) const {
  git({"tag", std::string(name), std::string(rev)});
}

std::vector<std::string> git_lines(const fs::path &dir, const std::vector<std::string> &args) {
  std::vector<std::string> argv{"git"};
  argv.insert(argv.end(), args.begin(), args.end());
  ProcessOptions opts;
  opts.cwd = dir;
  auto r = run_process(argv, opts);
  if (r.exit_code != 0) throw std::runtime_error("git failed: " + r.err);
  std::vector<std::string> out;
  for (auto line : split_lines(r.out)) out.emplace_back(line);
  return out;
}

LinearFixture build_linear(ScriptedRepo &repo) {
  LinearFixture f;
  repo.write("src/A.java", "public class A {\n    int v() {\n        return 1;\n    }\n}\n");
  f.commits.push_back(repo.commit("Add A", "2020-01-01T10:00:00Z"));
  repo.write("lib/b.py", "# helper\nimport os\n\n\ndef b():\n    return os.sep\n");
  repo.write("src/A.java",
             "public class A {\n    // value\n    int v() {\n        return 2;\n    }\n}\n");
  f.commits.push_back(repo.commit("Add b and tweak A", "2020-01-02T10:00:00Z"));
  repo.write("lib/b.py", "# helper\nimport os\n\n\ndef b():\n    return os.linesep\n");
  repo.write("notes.txt", "line one\nline two\n");
  f.commits.push_back(repo.commit("Update b", "2020-01-03T10:00:00Z"));
  return f;
}

MergeFixture build_branch_merge(ScriptedRepo &repo) {
  MergeFixture f;
  repo.write("src/Main.java", "class Main {\n    void a() {}\n}\n");
  f.base = repo.commit("Base", "2020-03-01T09:00:00Z");
  repo.checkout("feature", true);
  repo.write("src/Feature.java", "class Feature {\n    int x = 1;\n}\n");
  f.feature = repo.commit("Add feature", "2020-03-02T09:00:00Z", {"Bo Chen", "bo@example.org"});
  repo.checkout("main");
  repo.write("src/Main.java", "class Main {\n    void a() {}\n    void b() {}\n}\n");
  f.mainline = repo.commit("Extend main", "2020-03-03T09:00:00Z");
  f.merge = repo.merge("feature", "Merge feature", "2020-03-04T09:00:00Z");
  return f;
}

RenameFixture build_rename_chain(ScriptedRepo &repo) {
  RenameFixture f;
  const std::string body =
      "package a;\n\npublic class Foo {\n    int one() { return 1; }\n    int two() { return 2; }\n"
      "    int three() { return 3; }\n    int four() { return 4; }\n}\n";
  repo.write("a/Foo.java", body);
  f.commits.push_back(repo.commit("Add Foo", "2020-04-01T09:00:00Z"));
  f.paths.push_back("a/Foo.java");
  repo.move("a/Foo.java", "b/Foo.java");
  repo.write("b/Foo.java", body + "// moved\n");
  f.commits.push_back(repo.commit("Move Foo", "2020-04-02T09:00:00Z"));
  f.paths.push_back("b/Foo.java");
  repo.move("b/Foo.java", "c/Bar.java");
  f.commits.push_back(repo.commit("Rename Foo to Bar", "2020-04-03T09:00:00Z"));
  f.paths.push_back("c/Bar.java");
  std::string edited = body + "// moved\n";
  edited.replace(edited.find("return 2"), 8, "return 22");
  repo.write("c/Bar.java", edited);
  f.commits.push_back(repo.commit("Tweak Bar", "2020-04-04T09:00:00Z"));
  f.paths.push_back("c/Bar.java");
  return f;
}

InducingFixture build_inducing(ScriptedRepo &repo) {
  InducingFixture f;
  repo.write("src/Calc.java", "public class Calc {\n    int add(int a, int b) {\n"
                              "        return a - b;\n    }\n}\n");
  f.c1 = repo.commit("Add calculator", "2020-01-01T10:00:00Z");
  f.faulty_line = 3;
  repo.write("README.md", "calc\n");
  f.c2 = repo.commit("Add readme", "2020-01-10T10:00:00Z");
  repo.write("src/Calc.java", "public class Calc {\n    int add(int a, int b) {\n"
                              "        return a + b;\n    }\n}\n");
  f.c3 = repo.commit("Fix PROJ-1", "2020-02-01T10:00:00Z");
  return f;
}

AdditionFixture build_pure_addition(ScriptedRepo &repo) {
  AdditionFixture f;
  repo.write("src/Calc.java", "public class Calc {\n    int add(int a, int b) {\n"
                              "        return a + b;\n    }\n}\n");
  f.c1 = repo.commit("Add calculator", "2020-01-01T10:00:00Z");
  repo.write("src/Calc.java", "public class Calc {\n    int add(int a, int b) {\n"
                              "        return a + b;\n    }\n    int neg(int a) {\n"
                              "        return -a;\n    }\n}\n");
  f.fix = repo.commit("Fix PROJ-1", "2020-02-01T10:00:00Z");
  return f;
}

LinkingFixture build_linking(ScriptedRepo &repo) {
  LinkingFixture f;
  const std::vector<std::pair<std::string, std::vector<std::string>>> script{
      {"Initial import", {}},
      {"DERBY-1: fix null check in parser", {"DERBY-1"}},
      {"Fix DERBY-2/DERBY-9 in one go", {"DERBY-2", "DERBY-9"}},
      {"Refactor storage layer", {}},
      {"DERBY-3 improve logging", {"DERBY-3"}},
      {"Update docs for release 10.2", {}},
      {"DERBY-5 patch from contributor", {"DERBY-5"}},
      {"Revert OTHER-4 change", {}},
      {"Tidy imports", {}},
      {"DERBY-7: fixed race (see also DERBY-77)", {"DERBY-7"}},
      {"Follow-up for DERBY-1", {"DERBY-1"}},
      {"Bump version to 10.3.1", {}},
  };
  int day = 1;
  for (const auto &[message, keys] : script) {
    repo.write("src/F" + std::to_string(day) + ".java", "class F" + std::to_string(day) + " {}\n");
    char date[32];
    std::snprintf(date, sizeof date, "2020-05-%02dT10:00:00Z", day);
    const auto hash = repo.commit(message, date);
    f.commits.push_back(hash);
    for (const auto &k : keys) f.expected.emplace_back(hash, k);
    if (keys.size() == 2) f.multi_link_commit = hash;
    ++day;
  }
  for (const char *key : {"DERBY-1", "DERBY-2", "DERBY-3", "DERBY-5", "DERBY-7", "DERBY-9"}) {
    f.issues.push_back(jira_issue(key, "Bug", "2020-04-01T10:00:00.000+0000",
                                  "2020-06-01T10:00:00.000+0000", "problem in " + std::string(key)));
  }
  return f;
}

DatasetFixture build_dataset(ScriptedRepo &repo) {
  DatasetFixture f;
  repo.write("src/Calc.java", "public class Calc {\n    int add(int a, int b) {\n"
                              "        return a - b;\n    }\n}\n");
  repo.write("src/Util.java", "import java.util.List;\n\nclass Util {\n    int triple(int x) {\n"
                              "        return x * 2;\n    }\n}\n");
  repo.write("lib/tool.py", "import os\n\n\ndef sep():\n    return os.sep\n");
  repo.write("README.md", "tool\n");
  repo.commit("Initial version", "2020-01-01T10:00:00Z");
  repo.write("lib/tool.py", "import os\n\n\ndef sep():\n    return os.pathsep\n");
  f.release = repo.commit("Use pathsep", "2020-01-10T10:00:00Z", {"Bo Chen", "bo@example.org"});
  repo.tag("v1", f.release);
  repo.write("src/Calc.java", "public class Calc {\n    int add(int a, int b) {\n"
                              "        return a + b;\n    }\n}\n");
  f.fixes.push_back(repo.commit("Fix PROJ-1", "2020-02-20T10:00:00Z"));
  repo.write("src/Util.java", "import java.util.List;\n\nclass Util {\n    int triple(int x) {\n"
                              "        return x * 3;\n    }\n}\n");
  f.fixes.push_back(repo.commit("Fix PROJ-2", "2020-05-20T10:00:00Z"));
  repo.write("lib/tool.py", "import os\n\n\ndef sep():\n    return os.sep\n");
  f.fixes.push_back(repo.commit("Fix PROJ-3", "2020-09-01T10:00:00Z"));
  f.issues = {jira_issue("PROJ-1", "Bug", "2020-02-01T10:00:00Z", "2020-02-21T10:00:00Z"),
              jira_issue("PROJ-2", "Bug", "2020-05-01T10:00:00Z", "2020-05-21T10:00:00Z"),
              jira_issue("PROJ-3", "Bug", "2020-08-01T10:00:00Z", "2020-09-02T10:00:00Z")};
  return f;
}

nlohmann::json jira_issue(std::string_view key, std::string_view type, std::string_view created,
                          std::string_view updated, std::string_view summary,
                          std::string_view resolution) {
  nlohmann::json fields = {
      {"summary", summary},
      {"description", "details"},
      {"issuetype", {{"name", type}}},
      {"created", created},
      {"updated", updated},
      {"status", {{"name", "Closed"}}},
      {"reporter", {{"displayName", "Rae Reporter"}, {"emailAddress", "rae@example.org"}}},
      {"assignee", {{"displayName", "Ann Lee"}, {"emailAddress", "ann@example.org"}}},
  };
  if (!resolution.empty()) fields["resolution"] = {{"name", resolution}};
  return {{"key", key},
          {"self", "https://issues.example.org/rest/api/2/issue/" + std::string(key)},
          {"fields", fields}};
}

void ingest(Store &store, const fs::path &repo_dir, const std::vector<nlohmann::json> &issues,
            const fs::path &scratch) {
  harvest_vcs(store, repo_dir.string(), "p");
  write_ndjson(scratch / "issues.jsonl", issues);
  harvest_issues_fixture(store, scratch / "issues.jsonl", TrackerType::jira, "p",
                         "https://issues.example.org/browse/PROJ");
}

void write_ndjson(const fs::path &p, const std::vector<nlohmann::json> &docs) {
  std::string out;
  for (const auto &d : docs) out += d.dump() + "\n";
  write_file(p, out);
}

std::map<std::string, std::string> snapshot(const fs::path &datadir,
                                            const std::vector<std::string> &excluded) {
  std::map<std::string, std::string> out;
  for (const auto &entry : fs::directory_iterator(datadir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".ndjson") continue;
    const auto stem = entry.path().stem().string();
    bool skip = false;
    for (const auto &e : excluded) skip = skip || e == stem;
    if (!skip) out[entry.path().filename().string()] = read_file(entry.path());
  }
  return out;
}

} // namespace minehub::testing
