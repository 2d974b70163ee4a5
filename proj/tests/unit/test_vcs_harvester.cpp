#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "minehub/error.hpp"
#include "minehub/model.hpp"
#include "minehub/tar_archive.hpp"
#include "minehub/process.hpp"
#include "minehub/text.hpp"
#include "minehub/vcs_harvester.hpp"

#include "../support/fixture.hpp"

using namespace minehub;
using namespace minehub::testing;
namespace fs = std::filesystem;

namespace {

constexpr const char *empty_tree = "4b825dc642cb6eb9a060e54bf8d69288fbee4904";

// {hash -> parents} from rev-list.
std::map<std::string, std::vector<std::string>> oracle_parents(const fs::path &repo) {
  std::map<std::string, std::vector<std::string>> out;
  for (const auto &line : git_lines(repo, {"rev-list", "--all", "--parents"})) {
    auto parts = split(line, ' ');
    const auto hash = parts.front();
    parts.erase(parts.begin());
    out[hash] = parts;
  }
  return out;
}

// {path -> (added, deleted)} for `hash` against its first parent.
std::map<std::string, std::pair<int, int>> oracle_numstat(const fs::path &repo,
                                                           const std::string &hash,
                                                           const std::vector<std::string> &parents) {
  const std::string base = parents.empty() ? empty_tree : parents.front();
  const auto r = run_process({"git", "diff", "--numstat", "-z", "-M60%", base, hash}, {repo, {}, {}});
  REQUIRE(r.exit_code == 0);
  std::map<std::string, std::pair<int, int>> out;
  std::size_t pos = 0;
  auto next = [&] {
    const auto end = r.out.find('\0', pos);
    std::string tok = r.out.substr(pos, end - pos);
    pos = end + 1;
    return tok;
  };
  while (pos < r.out.size()) {
    const auto head = next();
    const auto fields = split(head, '\t');
    REQUIRE(fields.size() == 3);
    std::string path = fields[2];
    if (path.empty()) {
      next(); // old path
      path = next();
    }
    const int added = fields[0] == "-" ? 0 : std::stoi(fields[0]);
    const int deleted = fields[1] == "-" ? 0 : std::stoi(fields[1]);
    out[path] = {added, deleted};
  }
  return out;
}

struct Harvested {
  std::string vcs_id;
  std::map<std::string, Document> commits; // by hash
};

Harvested load(const Store &store, std::string_view project) {
  Harvested h;
  const auto pid = require_project(store, project);
  h.vcs_id = vcs_systems_of(store, pid).front()["id"];
  for (const auto &c : commits_of(store, pid)) h.commits[c["revision_hash"]] = c;
  return h;
}

std::map<std::string, std::pair<int, int>> stored_numstat(const Store &store,
                                                           const std::string &commit_id) {
  std::map<std::string, std::pair<int, int>> out;
  for (const auto &a : store.query(col::file_action, Query{}.eq("commit_id", commit_id))) {
    const auto file = store.get(col::file, a["file_id"].get<std::string>()).value();
    out[file["path"]] = {a["lines_added"].get<int>(), a["lines_deleted"].get<int>()};
  }
  return out;
}

// {final line -> (commit, path, orig line)} from git blame --line-porcelain.
std::map<int, BlameOrigin> oracle_blame(const fs::path &repo, const std::string &rev,
                                        const std::string &path) {
  std::map<int, BlameOrigin> out;
  int current = 0;
  for (const auto &line : git_lines(repo, {"blame", "--line-porcelain", rev, "--", path})) {
    if (line.size() > 41 && is_full_hash(std::string_view(line).substr(0, 40)) && line[40] == ' ') {
      const auto parts = split(line, ' ');
      current = std::stoi(parts[2]);
      out[current] = {parts[0], "", std::stoi(parts[1])};
    } else if (line.rfind("filename ", 0) == 0) {
      out[current].path = line.substr(9);
    }
  }
  return out;
}

void check_against_oracles(const fs::path &repo_dir) {
  TempDir data("harvest-data");
  Store store(data.path());
  const auto summary = harvest_vcs(store, repo_dir.string(), "p");
  const auto parents = oracle_parents(repo_dir);
  const auto h = load(store, "p");

  CHECK(summary.commits_stored == parents.size());
  REQUIRE(h.commits.size() == parents.size());
  for (const auto &[hash, ps] : parents) {
    REQUIRE(h.commits.count(hash) == 1);
    const auto &c = h.commits.at(hash);
    CHECK(c["parent_hashes"].get<std::vector<std::string>>() == ps);
    CHECK(c["is_merge"] == (ps.size() > 1));
    if (ps.size() > 1) {
      CHECK(stored_numstat(store, c["id"]).empty());
    } else {
      CHECK(stored_numstat(store, c["id"]) == oracle_numstat(repo_dir, hash, ps));
    }
  }

  const GitRepo repo(repo_dir);
  for (const auto &[branch, head] : repo.branch_heads()) {
    for (const auto &entry : repo.list_tree(head)) {
      if (entry.type != "blob") continue;
      const auto expected = oracle_blame(repo_dir, head, entry.path);
      std::set<int> lines;
      for (const auto &[l, _] : expected) lines.insert(l);
      const auto got = blame(store, h.vcs_id, head, entry.path, lines);
      CHECK_MESSAGE(got == expected, branch << ":" << entry.path);
    }
  }
}

} // namespace

TEST_SUITE("vcs-harvester") {

TEST_CASE("linear history matches git plumbing") {
  TempDir dir("linear");
  ScriptedRepo repo(dir / "repo");
  build_linear(repo);
  check_against_oracles(repo.dir());
}

TEST_CASE("branch and merge history matches git plumbing") {
  TempDir dir("merge");
  ScriptedRepo repo(dir / "repo");
  const auto f = build_branch_merge(repo);
  check_against_oracles(repo.dir());

  TempDir data("merge-data");
  Store store(data.path());
  harvest_vcs(store, repo.dir().string(), "p");
  const auto h = load(store, "p");
  const auto branches = h.commits.at(f.feature)["branches"].get<std::vector<std::string>>();
  CHECK(branches == std::vector<std::string>{"feature", "main"});
  CHECK(h.commits.at(f.merge)["branches"].get<std::vector<std::string>>() ==
        std::vector<std::string>{"main"});
}

TEST_CASE("rename chain matches git plumbing and blame follows renames") {
  TempDir dir("rename");
  ScriptedRepo repo(dir / "repo");
  const auto f = build_rename_chain(repo);
  check_against_oracles(repo.dir());

  TempDir data("rename-data");
  Store store(data.path());
  harvest_vcs(store, repo.dir().string(), "p");
  const auto h = load(store, "p");
  const auto rename = store.query(col::file_action,
                                  Query{}.eq("commit_id", h.commits.at(f.commits[2])["id"]));
  REQUIRE(rename.size() == 1);
  CHECK(rename[0]["mode"] == "R");
  CHECK(store.get(col::file, rename[0]["old_file_id"].get<std::string>()).value()["path"] ==
        "b/Foo.java");

  const auto origin = blame(store, h.vcs_id, f.commits[3], "c/Bar.java", {4, 5});
  CHECK(origin.at(4) == BlameOrigin{f.commits[0], "a/Foo.java", 4});
  CHECK(origin.at(5).commit == f.commits[3]);
}

TEST_CASE("re-harvesting an unchanged repository changes nothing") {
  TempDir dir("reharvest");
  ScriptedRepo repo(dir / "repo");
  build_branch_merge(repo);
  TempDir data("reharvest-data");
  {
    Store store(data.path());
    harvest_vcs(store, repo.dir().string(), "p");
  }
  const auto before = snapshot(data.path());
  {
    Store store(data.path());
    harvest_vcs(store, repo.dir().string(), "p");
  }
  CHECK(snapshot(data.path()) == before);
}

TEST_CASE("incremental harvest picks up new commits only") {
  TempDir dir("incremental");
  ScriptedRepo repo(dir / "repo");
  build_linear(repo);
  TempDir data("incremental-data");
  Store disk(data.path());
  CHECK(harvest_vcs(disk, repo.dir().string(), "p").commits_stored == 3);
  repo.write("src/A.java", "class A {}\n");
  repo.commit("Shrink A", "2020-01-05T10:00:00Z");
  CHECK(harvest_vcs(disk, repo.dir().string(), "p").commits_stored == 1);
  CHECK(disk.count(col::commit) == 4);
}

TEST_CASE("blame rejects lines outside the file") {
  TempDir dir("blame-range");
  ScriptedRepo repo(dir / "repo");
  const auto f = build_linear(repo);
  const GitRepo g(repo.dir());
  try {
    blame(g, f.commits[0], "src/A.java", {99});
    FAIL("expected out-of-range");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::out_of_range);
  }
  CHECK_THROWS_AS(blame(g, f.commits[0], "missing.java", {1}), Error);
}

TEST_CASE("invalid UTF-8 in commit messages is flagged") {
  TempDir dir("encoding");
  ScriptedRepo repo(dir / "repo");
  repo.write("a.txt", "x\n");
  repo.git({"add", "-A"});
  const auto tree = std::string(trim(repo.git({"write-tree"})));
  const std::string raw = "tree " + tree +
                          "\nauthor A <a@x> 1577872800 +0000\ncommitter A <a@x> 1577872800 +0000\n\ncaf\xe9\n";
  const auto r = run_process({"git", "hash-object", "-t", "commit", "-w", "--stdin"},
                             {repo.dir(), raw, {}});
  REQUIRE(r.exit_code == 0);
  repo.git({"update-ref", "refs/heads/main", std::string(trim(r.out))});
  TempDir data("encoding-data");
  Store disk(data.path());
  harvest_vcs(disk, repo.dir().string(), "p");
  const auto c = disk.query(col::commit).front();
  CHECK(c["had_encoding_errors"] == true);
  CHECK(c["message"].get<std::string>().find("\xef\xbf\xbd") != std::string::npos);
}

TEST_CASE("unified hunk parsing") {
  const auto hunks = parse_unified_hunks("@@ -3 +3,2 @@ ctx\n-a\n+b\n+c\n@@ -10,0 +12 @@\n+d\n");
  REQUIRE(hunks.size() == 2);
  CHECK(hunks[0].old_start == 3);
  CHECK(hunks[0].old_lines == 1);
  CHECK(hunks[0].new_lines == 2);
  CHECK(hunks[0].added == 2);
  CHECK(hunks[0].removed == 1);
  CHECK(hunks[1].old_lines == 0);
  CHECK(hunks[1].new_start == 12);
  CHECK(hunks[1].content == "+d\n");
}

TEST_CASE("archive round-trip preserves every commit") {
  TempDir dir("archive");
  ScriptedRepo repo(dir / "repo");
  build_branch_merge(repo);
  TempDir data("archive-data");
  Store store(data.path());
  harvest_vcs(store, repo.dir().string(), "p");
  const auto vcs = store.query(col::vcs_system).front();
  const auto archive = archive_repository(store, vcs["id"].get<std::string>());
  CHECK(store.get(col::vcs_system, vcs["id"].get<std::string>()).value()["archive_ref"] ==
        archive.string());

  const auto out = dir / "restored";
  extract_tar_gz(archive, out);
  const auto restored = out / (vcs["id"].get<std::string>() + ".git");
  REQUIRE(fs::is_directory(restored));
  auto a = git_lines(repo.dir(), {"rev-list", "--all"});
  auto b = git_lines(restored, {"rev-list", "--all"});
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  CHECK(a == b);

  const auto listing = list_tar_gz(archive);
  CHECK(std::is_sorted(listing.begin(), listing.end()));
}

TEST_CASE("missing sources fail cleanly") {
  TempDir data("missing-data");
  Store store(data.path());
  CHECK_THROWS_AS(harvest_vcs(store, (data / "nope").string(), "p"), Error);
}

} // TEST_SUITE
