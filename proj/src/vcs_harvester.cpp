#include "minehub/vcs_harvester.hpp"

#include <algorithm>
#include <charconv>
#include <queue>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "minehub/error.hpp"
#include "minehub/model.hpp"
#include "minehub/text.hpp"

namespace minehub {

namespace fs = std::filesystem;

namespace {

int parse_int(std::string_view s) {
  int value = 0;
  std::from_chars(s.data(), s.data() + s.size(), value);
  return value;
}

// "-a,b" or "+c,d"; a missing count means 1.
void parse_range(std::string_view token, int &start, int &count) {
  token.remove_prefix(1);
  const auto comma = token.find(',');
  start = parse_int(token.substr(0, comma));
  count = comma == std::string_view::npos ? 1 : parse_int(token.substr(comma + 1));
}

char normalize_status(char status) {
  switch (status) {
  case 'A':
  case 'D':
  case 'R':
  case 'C':
    return status;
  default:
    return 'M';
  }
}

} // namespace

std::vector<DiffHunk> parse_unified_hunks(std::string_view patch) {
  std::vector<DiffHunk> hunks;
  DiffHunk *current = nullptr;
  for (auto line : split_lines(patch)) {
    if (line.rfind("@@ ", 0) == 0) {
      const auto close = line.find(" @@", 3);
      if (close == std::string_view::npos) {
        continue;
      }
      const auto ranges = split(line.substr(3, close - 3), ' ');
      if (ranges.size() != 2) {
        continue;
      }
      DiffHunk h;
      parse_range(ranges[0], h.old_start, h.old_lines);
      parse_range(ranges[1], h.new_start, h.new_lines);
      hunks.push_back(std::move(h));
      current = &hunks.back();
      continue;
    }
    if (current == nullptr || line.empty()) {
      continue;
    }
    const char tag = line.front();
    if (tag != ' ' && tag != '+' && tag != '-' && tag != '\\') {
      current = nullptr;
      continue;
    }
    current->content.append(line);
    current->content.push_back('\n');
    if (tag == '+') {
      ++current->added;
    } else if (tag == '-') {
      ++current->removed;
    }
  }
  return hunks;
}

std::vector<FileChange> parse_raw_patch(std::string_view output) {
  std::vector<FileChange> changes;
  std::size_t pos = 0;
  auto next_token = [&]() -> std::string_view {
    const auto end = output.find('\0', pos);
    const auto stop = end == std::string_view::npos ? output.size() : end;
    const auto tok = output.substr(pos, stop - pos);
    pos = end == std::string_view::npos ? output.size() : end + 1;
    return tok;
  };
  while (pos < output.size() && output[pos] == ':') {
    const auto meta = next_token();
    const auto fields = split(meta.substr(1), ' ');
    if (fields.size() < 5 || fields[4].empty()) {
      throw Error(ErrorCode::git, "malformed raw diff entry");
    }
    FileChange change;
    change.status = normalize_status(fields[4][0]);
    const auto first = std::string(next_token());
    if (fields[4][0] == 'R' || fields[4][0] == 'C') {
      change.old_path = first;
      change.new_path = std::string(next_token());
    } else {
      change.old_path = first;
      change.new_path = first;
    }
    changes.push_back(std::move(change));
  }
  if (pos < output.size() && output[pos] == '\0') {
    ++pos;
  }
  std::string_view patch = output.substr(std::min(pos, output.size()));

  std::vector<std::string_view> sections;
  std::size_t start = patch.rfind("diff --git ", 0) == 0 ? 0 : patch.find("\ndiff --git ");
  while (start != std::string_view::npos) {
    if (patch[start] == '\n') {
      ++start;
    }
    const auto next = patch.find("\ndiff --git ", start);
    sections.push_back(patch.substr(start, next == std::string_view::npos ? next : next - start + 1));
    start = next;
  }
  if (sections.size() != changes.size()) {
    throw Error(ErrorCode::git, "diff sections do not match raw entries (" +
                                    std::to_string(sections.size()) + " vs " +
                                    std::to_string(changes.size()) + ")");
  }
  for (std::size_t i = 0; i < changes.size(); ++i) {
    auto &change = changes[i];
    const auto body = sections[i];
    const auto first_hunk = body.find("\n@@ ");
    const auto header = body.substr(0, first_hunk);
    if (header.find("\nBinary files ") != std::string_view::npos ||
        header.find("\nGIT binary patch") != std::string_view::npos) {
      change.is_binary = true;
      continue;
    }
    if (first_hunk != std::string_view::npos) {
      change.hunks = parse_unified_hunks(body.substr(first_hunk + 1));
    }
    for (const auto &h : change.hunks) {
      change.lines_added += h.added;
      change.lines_deleted += h.removed;
    }
  }
  return changes;
}

std::vector<FileChange> diff_commit(const GitRepo &repo, std::string_view hash) {
  const auto out = repo.run({"diff-tree", "-r", "--root", "--no-commit-id", "-z", "--raw", "-p",
                             "-M60%", "-C60%", "--full-index", "--no-ext-diff", "--no-color",
                             std::string(hash)});
  return parse_raw_patch(out);
}

// ---- harvest -------------------------------------------------------------

namespace {

struct VcsTarget {
  std::string url;
  std::string clone_path;
};

VcsTarget prepare_clone(const Store &store, std::string_view source, std::string_view vcs_id) {
  std::error_code ec;
  if (fs::is_directory(fs::path(source), ec)) {
    const auto path = fs::canonical(fs::path(source)).string();
    return {path, path};
  }
  if (store.datadir().empty()) {
    throw Error(ErrorCode::invalid_argument, "remote sources need an on-disk data directory");
  }
  const fs::path clones = store.datadir() / "clones";
  fs::create_directories(clones);
  const fs::path target = clones / (std::string(vcs_id) + ".git");
  ProcessResult r;
  if (fs::exists(target / "HEAD")) {
    r = run_process({"git", "remote", "update", "--prune"},
                    {target, {}, {"GIT_TERMINAL_PROMPT=0"}});
  } else {
    r = run_process({"git", "clone", "--mirror", "--quiet", std::string(source), target.string()},
                    {{}, {}, {"GIT_TERMINAL_PROMPT=0"}});
  }
  if (r.exit_code != 0) {
    throw Error(ErrorCode::git, "cannot clone " + std::string(source) + ": " +
                                    std::string(trim(r.err)));
  }
  return {std::string(source), target.string()};
}

} // namespace

HarvestSummary harvest_vcs(Store &store, std::string_view source, std::string_view project) {
  const std::string project_id = ensure_project(store, project);
  std::error_code ec;
  const bool local = fs::is_directory(fs::path(source), ec);
  const std::string url = local ? fs::canonical(fs::path(source)).string() : std::string(source);
  Document vcs = {{"project_id", project_id}, {"url", url}, {"vcs_type", "git"}};
  const std::string vcs_id = make_id(col::vcs_system, vcs);
  const auto target = prepare_clone(store, source, vcs_id);
  vcs["clone_path"] = target.clone_path;
  if (const auto existing = store.get(col::vcs_system, vcs_id)) {
    for (const char *keep : {"archive_ref", "last_harvested"}) {
      if (existing->contains(keep)) {
        vcs[keep] = (*existing)[keep];
      }
    }
  }
  store.upsert(col::vcs_system, vcs);

  GitRepo repo(target.clone_path);
  const auto commits = repo.commits_on_branches();

  std::unordered_map<std::string, std::vector<std::string>> branches_of;
  for (const auto &[branch, head] : repo.branch_heads()) {
    for (const auto &h : repo.rev_list(head)) {
      branches_of[h].push_back(branch);
    }
  }

  HarvestSummary summary;
  std::int64_t watermark = 0;
  for (const auto &c : commits) {
    const auto author_id = upsert_person(store, c.author.name, c.author.email);
    const auto committer_id = upsert_person(store, c.committer.name, c.committer.email);
    const std::string commit_id = commit_id_for(vcs_id, c.hash);
    const bool is_merge = c.parents.size() > 1;

    const auto existing = store.get(col::commit, commit_id);

    // Children go first; the commit document marks the commit as complete.
    if (!is_merge && !existing) {
      for (const auto &change : diff_commit(repo, c.hash)) {
        const std::string path = change.status == 'D' ? change.old_path : change.new_path;
        const auto file_id = store.upsert(col::file, {{"vcs_system_id", vcs_id}, {"path", path}});
        Document action = {{"commit_id", commit_id},
                           {"file_id", file_id},
                           {"mode", std::string(1, change.status)},
                           {"lines_added", change.lines_added},
                           {"lines_deleted", change.lines_deleted},
                           {"is_binary", change.is_binary}};
        if (change.status == 'R' || change.status == 'C') {
          action["old_file_id"] =
              store.upsert(col::file, {{"vcs_system_id", vcs_id}, {"path", change.old_path}});
        }
        const auto action_id = store.upsert(col::file_action, action);
        ++summary.actions_stored;
        for (const auto &h : change.hunks) {
          store.upsert(col::hunk, {{"file_action_id", action_id},
                                   {"old_start", h.old_start},
                                   {"old_lines", h.old_lines},
                                   {"new_start", h.new_start},
                                   {"new_lines", h.new_lines},
                                   {"content", h.content}});
        }
      }
    }

    auto branches = branches_of[c.hash];
    std::sort(branches.begin(), branches.end());
    Document commit_doc = {{"vcs_system_id", vcs_id},
                               {"revision_hash", c.hash},
                               {"parent_hashes", c.parents},
                               {"author_person_id", author_id},
                               {"committer_person_id", committer_id},
                               {"author_date", format_utc(c.author.when.epoch_seconds)},
                               {"author_date_offset", c.author.when.offset_minutes},
                               {"committer_date", format_utc(c.committer.when.epoch_seconds)},
                               {"committer_date_offset", c.committer.when.offset_minutes},
                               {"message", c.message},
                               {"branches", branches},
                               {"is_merge", is_merge}};
    // Labels written by the enricher survive re-harvest.
    if (existing && existing->contains("labels")) {
      commit_doc["labels"] = (*existing)["labels"];
    }
    store.upsert(col::commit, std::move(commit_doc));
    if (!existing) {
      ++summary.commits_stored;
    }
    watermark = std::max(watermark, c.committer.when.epoch_seconds);
  }

  if (!commits.empty()) {
    store.modify(col::vcs_system, vcs_id, [&](Document &d) {
      d["last_harvested"] = format_utc(watermark);
      return true;
    });
  }
  summary.files_stored = store.count(col::file, Query{}.eq("vcs_system_id", vcs_id));
  spdlog::info("harvested {} commits, {} file actions from {}", summary.commits_stored,
               summary.actions_stored, url);
  return summary;
}

// ---- blame ---------------------------------------------------------------

namespace {

struct CommitNode {
  std::vector<std::string> parents;
  std::int64_t committer_time = 0;
};

CommitNode read_commit_node(const GitRepo &repo, const std::string &hash) {
  const auto content = repo.read_object(hash);
  if (!content) {
    throw Error(ErrorCode::not_found, "unknown revision " + hash);
  }
  CommitNode node;
  for (auto line : split_lines(*content)) {
    if (line.empty()) {
      break;
    }
    if (line.rfind("parent ", 0) == 0) {
      node.parents.emplace_back(line.substr(7));
    } else if (line.rfind("committer ", 0) == 0) {
      const auto gt = line.rfind('>');
      if (gt != std::string_view::npos) {
        node.committer_time = parse_raw_git_date(line.substr(gt + 1)).epoch_seconds;
      }
    }
  }
  return node;
}

std::optional<std::string> renamed_from(const GitRepo &repo, const std::string &parent,
                                        const std::string &child, const std::string &path) {
  const auto out = repo.run({"diff-tree", "-r", "-z", "-M60%", "--raw", "--no-commit-id", parent, child});
  std::size_t pos = 0;
  auto next = [&]() -> std::string {
    const auto end = out.find('\0', pos);
    const auto stop = end == std::string::npos ? out.size() : end;
    std::string tok = out.substr(pos, stop - pos);
    pos = end == std::string::npos ? out.size() : end + 1;
    return tok;
  };
  while (pos < out.size() && out[pos] == ':') {
    const auto meta = next();
    const auto sp = meta.rfind(' ');
    const char status = sp == std::string::npos || sp + 1 >= meta.size() ? ' ' : meta[sp + 1];
    const auto first = next();
    if (status == 'R' || status == 'C') {
      const auto second = next();
      if (status == 'R' && second == path) {
        return first;
      }
    }
  }
  return std::nullopt;
}

// Maps new-side line numbers that a diff leaves untouched to their old-side
// numbers; lines inside a hunk map to nothing.
std::optional<int> unchanged_old_line(const std::vector<DiffHunk> &hunks, int line) {
  int delta = 0;
  for (const auto &h : hunks) {
    if (h.new_lines > 0 && line >= h.new_start && line < h.new_start + h.new_lines) {
      return std::nullopt;
    }
    const int end = h.new_lines > 0 ? h.new_start + h.new_lines - 1 : h.new_start;
    if (line > end) {
      delta += h.old_lines - h.new_lines;
    }
  }
  return line + delta;
}

} // namespace

std::map<int, BlameOrigin> blame(const GitRepo &repo, std::string_view revision,
                                 std::string_view path, const std::set<int> &lines) {
  const auto rev = repo.resolve_commit(revision);
  if (!rev) {
    throw Error(ErrorCode::not_found, "unknown revision " + std::string(revision));
  }
  const auto content = repo.file_at(*rev, path);
  if (!content) {
    throw Error(ErrorCode::not_found,
                "path " + std::string(path) + " absent at " + std::string(revision));
  }
  const int line_count = static_cast<int>(split_lines(*content).size());
  for (int l : lines) {
    if (l < 1 || l > line_count) {
      throw Error(ErrorCode::out_of_range, "line " + std::to_string(l) + " outside " +
                                               std::string(path) + " (1.." +
                                               std::to_string(line_count) + ")");
    }
  }

  using Key = std::pair<std::string, std::string>; // commit, path
  struct Pending {
    std::map<int, std::vector<int>> lines; // line in this version -> requested lines
  };
  std::map<Key, Pending> pending;
  std::map<std::string, CommitNode> nodes;
  auto node_of = [&](const std::string &hash) -> const CommitNode & {
    auto it = nodes.find(hash);
    if (it == nodes.end()) {
      it = nodes.emplace(hash, read_commit_node(repo, hash)).first;
    }
    return it->second;
  };
  using Item = std::tuple<std::int64_t, std::string, std::string>;
  std::priority_queue<Item> queue;
  auto enqueue = [&](const std::string &commit, const std::string &p, int line,
                     const std::vector<int> &requested) {
    const Key key{commit, p};
    auto [it, inserted] = pending.try_emplace(key);
    auto &slot = it->second.lines[line];
    slot.insert(slot.end(), requested.begin(), requested.end());
    if (inserted) {
      queue.emplace(node_of(commit).committer_time, commit, p);
    }
  };

  for (int l : lines) {
    enqueue(*rev, std::string(path), l, {l});
  }

  std::map<int, BlameOrigin> result;
  while (!queue.empty()) {
    auto [time, commit, file] = queue.top();
    queue.pop();
    const auto entry = pending.find({commit, file});
    if (entry == pending.end()) {
      continue;
    }
    auto remaining = std::move(entry->second.lines);
    pending.erase(entry);
    const auto &node = node_of(commit);
    const auto current = repo.file_at(commit, file);

    struct ParentFile {
      std::string commit;
      std::string path;
      std::optional<std::string> content;
    };
    std::vector<ParentFile> candidates;
    for (const auto &p : node.parents) {
      if (auto same_path = repo.file_at(p, file)) {
        candidates.push_back({p, file, std::move(same_path)});
      } else if (auto old = renamed_from(repo, p, commit, file)) {
        candidates.push_back({p, *old, repo.file_at(p, *old)});
      }
    }
    // An identical parent version takes the whole blame.
    const auto identical = std::find_if(candidates.begin(), candidates.end(),
                                        [&](const ParentFile &pf) { return pf.content == current; });
    if (identical != candidates.end()) {
      for (const auto &[line, req] : remaining) {
        enqueue(identical->commit, identical->path, line, req);
      }
      remaining.clear();
    }
    for (const auto &pf : candidates) {
      if (remaining.empty()) {
        break;
      }
      const auto diff = repo.run({"diff", "--no-ext-diff", "--no-color", "--no-renames", "-U0",
                                  pf.commit + ":" + pf.path, commit + ":" + file});
      const auto hunks = parse_unified_hunks(diff);
      for (auto it = remaining.begin(); it != remaining.end();) {
        if (const auto old = unchanged_old_line(hunks, it->first)) {
          enqueue(pf.commit, pf.path, *old, it->second);
          it = remaining.erase(it);
        } else {
          ++it;
        }
      }
    }
    for (const auto &[line, req] : remaining) {
      for (int r : req) {
        result[r] = BlameOrigin{commit, file, line};
      }
    }
  }
  return result;
}

std::map<int, BlameOrigin> blame(const Store &store, std::string_view vcs_system_id,
                                 std::string_view revision, std::string_view path,
                                 const std::set<int> &lines) {
  const auto vcs = store.get(col::vcs_system, vcs_system_id);
  if (!vcs) {
    throw Error(ErrorCode::not_found, "unknown vcs system " + std::string(vcs_system_id));
  }
  return blame(GitRepo(clone_path_of(*vcs)), revision, path, lines);
}

} // namespace minehub
