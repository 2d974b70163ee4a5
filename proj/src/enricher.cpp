#include "minehub/enricher.hpp"

#include <algorithm>
#include <memory>
#include <numeric>
#include <set>
#include <unordered_map>

#include <spdlog/spdlog.h>

#include "minehub/error.hpp"
#include "minehub/git.hpp"
#include "minehub/metrics.hpp"
#include "minehub/model.hpp"
#include "minehub/text.hpp"

namespace minehub {

namespace {

// Base letters for U+00C0..U+017F; "" keeps the code point.
const std::vector<std::string> &latin_folds() {
  static const std::vector<std::string> table = [] {
    std::vector<std::string> t;
    const char *latin1[] = {"a", "a", "a", "a", "a", "a", "ae", "c", "e", "e", "e", "e",
                            "i", "i", "i", "i", "d", "n", "o", "o", "o", "o", "o", "",
                            "o", "u", "u", "u", "u", "y", "th", "ss"};
    for (int pass = 0; pass < 2; ++pass) {
      for (const char *s : latin1) {
        t.emplace_back(s);
      }
    }
    t[0xFF - 0xC0] = "y";
    const std::pair<int, const char *> extended[] = {
        {6, "a"}, {8, "c"}, {4, "d"}, {10, "e"}, {8, "g"}, {4, "h"}, {10, "i"}, {2, "ij"},
        {2, "j"}, {3, "k"}, {10, "l"}, {9, "n"}, {6, "o"}, {2, "oe"}, {6, "r"}, {8, "s"},
        {6, "t"}, {12, "u"}, {2, "w"}, {3, "y"}, {6, "z"}, {1, "s"}};
    for (const auto &[n, s] : extended) {
      for (int i = 0; i < n; ++i) {
        t.emplace_back(s);
      }
    }
    return t;
  }();
  return table;
}

struct UnionFind {
  std::vector<std::size_t> parent;

  explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) {
      parent[std::max(a, b)] = std::min(a, b);
    }
  }
};

struct ChangedLines {
  std::vector<int> added;   // new line numbers
  std::vector<int> removed; // old line numbers
};

ChangedLines changed_lines(const std::vector<Document> &hunks) {
  ChangedLines out;
  for (const auto &h : hunks) {
    int old_no = h["old_start"].get<int>();
    int new_no = h["new_start"].get<int>();
    const auto &content = h["content"].get_ref<const std::string &>();
    for (auto line : split_lines(content)) {
      if (line.empty()) {
        continue;
      }
      switch (line.front()) {
      case '-': out.removed.push_back(old_no++); break;
      case '+': out.added.push_back(new_no++); break;
      case ' ':
        ++old_no;
        ++new_no;
        break;
      default: break;
      }
    }
  }
  return out;
}

struct FileFacts {
  bool only_comments = true; // every changed line is a comment line
  bool satd_added = false;
  bool satd_removed = false;
};

FileFacts inspect_lines(const GitRepo &repo, const std::string &rev, const std::string &path,
                        const std::vector<int> &lines, bool added, const EnricherConfig &config,
                        FileFacts facts) {
  if (lines.empty()) {
    return facts;
  }
  const auto content = repo.file_at(rev, path);
  if (!content || looks_binary(*content)) {
    facts.only_comments = false;
    return facts;
  }
  const auto scanned = scan_lines(*content, language_for_path(path));
  for (int n : lines) {
    if (n < 1 || n > static_cast<int>(scanned.size())) {
      facts.only_comments = false;
      continue;
    }
    const auto &line = scanned[static_cast<std::size_t>(n - 1)];
    if (line.kind != LineClass::comment) {
      facts.only_comments = false;
    }
    if (!line.comment_text.empty() && matches_satd(line.comment_text, config)) {
      (added ? facts.satd_added : facts.satd_removed) = true;
    }
  }
  return facts;
}

bool admitted(const Document &link, const EnricherConfig &config) {
  const auto verdict = link["verdict"].get<std::string>();
  if (verdict == "valid") {
    return true;
  }
  return verdict == "unvalidated" && config.admit_unvalidated &&
         link["syntactic_confidence"].get<int>() >= 2;
}

} // namespace

bool is_documentation_path(std::string_view path, const EnricherConfig &config) {
  const auto lower = to_lower_ascii(path);
  for (const auto &ext : config.doc_extensions) {
    if (lower.ends_with(to_lower_ascii(ext))) {
      return true;
    }
  }
  const auto segments = split(lower, '/');
  for (std::size_t i = 0; i + 1 < segments.size(); ++i) {
    for (const auto &dir : config.doc_dirs) {
      if (segments[i] == dir) {
        return true;
      }
    }
  }
  return false;
}

bool matches_satd(std::string_view comment_text, const EnricherConfig &config) {
  return std::any_of(config.satd_patterns.begin(), config.satd_patterns.end(),
                     [&](const auto &p) { return contains_word(comment_text, p); });
}

LabelSummary label_commits(Store &store, std::string_view project, const EnricherConfig &config) {
  const auto project_id = require_project(store, project);
  LabelSummary summary;
  for (const char *name : label_names) {
    summary.applied[name] = 0;
  }

  std::unordered_map<std::string, bool> bugfix;
  for (const auto &link : links_of(store, project_id)) {
    if (!admitted(link, config)) {
      continue;
    }
    const auto issue = store.get(col::issue, link["issue_id"].get<std::string>());
    if (issue && is_bug_issue(*issue)) {
      bugfix[link["commit_id"].get<std::string>()] = true;
    }
  }

  std::map<std::string, std::unique_ptr<GitRepo>> repos;
  for (const auto &commit : commits_of(store, project_id)) {
    const auto commit_id = commit["id"].get<std::string>();
    const auto vcs_id = commit["vcs_system_id"].get<std::string>();
    auto &repo = repos[vcs_id];
    if (!repo) {
      repo = std::make_unique<GitRepo>(clone_path_of(*store.get(col::vcs_system, vcs_id)));
    }
    const auto hash = commit["revision_hash"].get<std::string>();
    const auto parent = commit["parent_hashes"].empty()
                            ? std::string()
                            : commit["parent_hashes"][0].get<std::string>();

    const auto actions = store.query(col::file_action, Query{}.eq("commit_id", commit_id));
    bool documentation = !actions.empty();
    bool satd_added = false;
    bool satd_removed = false;
    for (const auto &action : actions) {
      const auto path = (*store.get(col::file, action["file_id"].get<std::string>()))["path"]
                            .get<std::string>();
      std::string old_path = path;
      if (action.contains("old_file_id")) {
        old_path = (*store.get(col::file, action["old_file_id"].get<std::string>()))["path"]
                       .get<std::string>();
      }
      if (action["is_binary"].get<bool>()) {
        documentation = documentation && is_documentation_path(path, config);
        continue;
      }
      const auto lines =
          changed_lines(store.query(col::hunk, Query{}.eq("file_action_id", action["id"])));
      FileFacts facts;
      facts = inspect_lines(*repo, hash, path, lines.added, true, config, facts);
      if (!parent.empty()) {
        facts = inspect_lines(*repo, parent, old_path, lines.removed, false, config, facts);
      }
      if (lines.added.empty() && lines.removed.empty()) {
        facts.only_comments = false;
      }
      documentation = documentation && (is_documentation_path(path, config) || facts.only_comments);
      satd_added = satd_added || facts.satd_added;
      satd_removed = satd_removed || facts.satd_removed;
    }

    const auto message = commit["message"].get<std::string>();
    Document labels{
        {"bugfix", bugfix.contains(commit_id)},
        {"refactoring_keyword",
         std::any_of(config.refactoring_keywords.begin(), config.refactoring_keywords.end(),
                     [&](const auto &k) { return contains_word(message, k); })},
        {"documentation", documentation},
        {"satd_added", satd_added},
        {"satd_removed", satd_removed}};
    for (const char *name : label_names) {
      if (labels[name].get<bool>()) {
        ++summary.applied[name];
      }
    }
    store.modify(col::commit, commit_id, [&](Document &doc) {
      if (doc.contains("labels") && doc["labels"] == labels) {
        return false;
      }
      doc["labels"] = labels;
      return true;
    });
    ++summary.commits;
  }
  return summary;
}

std::string normalize_name(std::string_view name) {
  const auto &folds = latin_folds();
  std::vector<char32_t> out;
  bool pending_space = false;
  for (char32_t cp : decode_utf8(name)) {
    if (cp == U' ' || cp == U'\t' || cp == U'\n' || cp == U'\r' || cp == 0xA0) {
      pending_space = !out.empty();
      continue;
    }
    if (cp >= 0x300 && cp <= 0x36F) {
      continue; // combining marks
    }
    if (pending_space) {
      out.push_back(U' ');
      pending_space = false;
    }
    if (cp < 0x80) {
      out.push_back(static_cast<char32_t>(std::tolower(static_cast<int>(cp))));
    } else if (cp >= 0xC0 && cp < 0xC0 + folds.size() && !folds[cp - 0xC0].empty()) {
      for (char c : folds[cp - 0xC0]) {
        out.push_back(static_cast<char32_t>(c));
      }
    } else {
      out.push_back(cp);
    }
  }
  return encode_utf8(out);
}

std::vector<std::vector<std::string>> identity_components(const std::vector<PersonRecord> &persons) {
  std::vector<const PersonRecord *> sorted;
  for (const auto &p : persons) {
    sorted.push_back(&p);
  }
  std::sort(sorted.begin(), sorted.end(), [](const auto *a, const auto *b) { return a->id < b->id; });
  sorted.erase(std::unique(sorted.begin(), sorted.end(),
                           [](const auto *a, const auto *b) { return a->id == b->id; }),
               sorted.end());

  UnionFind uf(sorted.size());
  std::unordered_map<std::string, std::size_t> first_by_key;
  const auto join_on = [&](const std::string &key, std::size_t i) {
    auto [it, inserted] = first_by_key.try_emplace(key, i);
    if (!inserted) {
      uf.unite(it->second, i);
    }
  };
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto &p = *sorted[i];
    const auto email = std::string(trim(p.email));
    if (!email.empty()) {
      join_on("e:" + email, i);
      const auto at = email.find('@');
      const auto local = to_lower_ascii(email.substr(0, at));
      if (at != std::string::npos && local.size() >= 5) {
        join_on("l:" + local, i);
      }
    }
    const auto norm = normalize_name(p.name);
    if (std::count(norm.begin(), norm.end(), ' ') >= 1) {
      join_on("n:" + norm, i);
    }
  }
  std::map<std::size_t, std::vector<std::string>> groups;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    groups[uf.find(i)].push_back(sorted[i]->id);
  }
  std::vector<std::vector<std::string>> out;
  for (auto &[root, ids] : groups) {
    out.push_back(std::move(ids));
  }
  return out;
}

IdentitySummary merge_identities(Store &store, std::string_view project) {
  require_project(store, project);
  std::vector<PersonRecord> persons;
  for (const auto &p : store.query(col::person)) {
    persons.push_back({p["id"].get<std::string>(), p["name"].get<std::string>(),
                       p["email"].get<std::string>()});
  }
  const auto components = identity_components(persons);
  std::set<std::string> anchors;
  for (const auto &ids : components) {
    anchors.insert(ids.front());
    store.upsert(col::identity, {{"anchor_person_id", ids.front()}, {"person_ids", ids}});
  }
  for (const auto &identity : store.query(col::identity)) {
    if (!anchors.contains(identity["anchor_person_id"].get<std::string>())) {
      store.remove(col::identity, identity["id"].get<std::string>());
    }
  }
  return {persons.size(), components.size()};
}

} // namespace minehub
