#include "minehub/linker.hpp"

#include <algorithm>
#include <regex>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "minehub/enricher.hpp"
#include "minehub/error.hpp"
#include "minehub/git.hpp"
#include "minehub/metrics.hpp"
#include "minehub/model.hpp"
#include "minehub/text.hpp"
#include "minehub/vcs_harvester.hpp"

namespace minehub {

namespace {

constexpr std::int64_t link_window_days = 7;

struct IssueIndex {
  // (tracker type, external id) -> issue documents
  std::map<std::pair<std::string, std::string>, std::vector<const Document *>> by_ext;
  std::vector<std::string> jira_keys;
};

IssueIndex index_issues(const Store &store, std::string_view project_id,
                        std::vector<Document> &storage) {
  IssueIndex index;
  std::set<std::string> keys;
  std::vector<std::pair<std::string, std::size_t>> refs;
  for (const auto &sys : issue_systems_of(store, project_id)) {
    const auto tracker = sys["tracker_type"].get<std::string>();
    for (auto &issue : store.query(col::issue, Query{}.eq("issue_system_id", sys["id"]))) {
      const auto ext = issue["external_id"].get<std::string>();
      if (tracker == "jira") {
        if (const auto dash = ext.rfind('-'); dash != std::string::npos) {
          keys.insert(ext.substr(0, dash));
        }
      }
      storage.push_back(std::move(issue));
      refs.emplace_back(tracker, storage.size() - 1);
    }
  }
  for (const auto &[tracker, pos] : refs) {
    index.by_ext[{tracker, storage[pos]["external_id"].get<std::string>()}].push_back(
        &storage[pos]);
  }
  index.jira_keys.assign(keys.begin(), keys.end());
  return index;
}

// Computed from persons directly so scores do not depend on whether the
// identify stage has run yet.
std::unordered_map<std::string, std::string> identity_anchors(const Store &store) {
  std::vector<PersonRecord> persons;
  for (const auto &p : store.query(col::person)) {
    persons.push_back({p["id"].get<std::string>(), p["name"].get<std::string>(),
                       p["email"].get<std::string>()});
  }
  std::unordered_map<std::string, std::string> anchor;
  for (const auto &ids : identity_components(persons)) {
    for (const auto &id : ids) {
      anchor[id] = ids.front();
    }
  }
  return anchor;
}

int semantic_score(const Document &commit, const Document &issue,
                   const std::unordered_map<std::string, std::string> &anchors) {
  int score = 0;
  if (to_lower_ascii(str_or(issue, "resolution")) == "fixed") {
    ++score;
  }
  const auto assignee = str_or(issue, "assignee_person_id");
  if (!assignee.empty()) {
    const auto author = commit["author_person_id"].get<std::string>();
    const auto anchor_of = [&](const std::string &p) {
      const auto it = anchors.find(p);
      return it == anchors.end() ? p : it->second;
    };
    if (anchor_of(author) == anchor_of(assignee)) {
      ++score;
    }
  }
  const auto title_tokens = word_tokens(issue["title"].get<std::string>());
  if (!title_tokens.empty()) {
    const auto msg = word_tokens(commit["message"].get<std::string>());
    const std::unordered_set<std::string> msg_set(msg.begin(), msg.end());
    if (std::all_of(title_tokens.begin(), title_tokens.end(),
                    [&](const auto &t) { return msg_set.contains(t); })) {
      ++score;
    }
  }
  const auto when = parse_utc(commit["committer_date"].get<std::string>());
  const auto created = parse_utc(issue["created_at"].get<std::string>());
  const auto updated = parse_utc(issue["updated_at"].get<std::string>());
  if (when >= created && when <= updated + link_window_days * seconds_per_day) {
    ++score;
  }
  return score;
}

std::string without_whitespace(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c)) == 0) {
      out.push_back(c);
    }
  }
  return out;
}

struct RemovedLines {
  std::set<int> lines;                    // old line numbers
  std::map<int, std::string> content;     // old line number -> text
  std::unordered_set<std::string> added;  // whitespace-free added lines
};

RemovedLines removed_lines(const std::vector<Document> &hunks) {
  RemovedLines out;
  for (const auto &h : hunks) {
    int old_no = h["old_start"].get<int>();
    const auto &content = h["content"].get_ref<const std::string &>();
    for (auto line : split_lines(content)) {
      if (line.empty()) {
        continue;
      }
      if (!line.empty() && line.back() == '\r') {
        line.remove_suffix(1);
      }
      const char tag = line.front();
      const auto body = line.substr(1);
      if (tag == '-') {
        out.lines.insert(old_no);
        out.content[old_no] = std::string(body);
        ++old_no;
      } else if (tag == '+') {
        out.added.insert(without_whitespace(body));
      } else if (tag == ' ') {
        ++old_no;
      }
    }
  }
  return out;
}

enum class LineKind { whitespace, comment, code };

} // namespace

bool has_bugfix_keyword(std::string_view message, const LinkerConfig &config) {
  return std::any_of(config.bugfix_keywords.begin(), config.bugfix_keywords.end(),
                     [&](const auto &k) { return contains_word(message, k); });
}

std::vector<IssueReference> find_issue_references(std::string_view message,
                                                  const std::vector<std::string> &jira_keys,
                                                  const LinkerConfig &config) {
  static const std::regex jira_re(R"(\b([A-Z][A-Z0-9]+)-(\d+)\b)");
  static const std::regex github_re(R"(#(\d+)\b)");
  static const std::regex bare_re(R"((?:^|[^\w#.\-/])(\d+)(?![\w.]))");
  const std::string text(message);
  std::vector<std::pair<std::size_t, IssueReference>> found;
  const std::set<std::string> keys(jira_keys.begin(), jira_keys.end());

  for (auto it = std::sregex_iterator(text.begin(), text.end(), jira_re);
       it != std::sregex_iterator(); ++it) {
    if (keys.contains((*it)[1].str())) {
      found.push_back({static_cast<std::size_t>(it->position(0)), {"jira", (*it)[0].str()}});
    }
  }
  for (auto it = std::sregex_iterator(text.begin(), text.end(), github_re);
       it != std::sregex_iterator(); ++it) {
    found.push_back({static_cast<std::size_t>(it->position(0)), {"github", (*it)[1].str()}});
  }
  if (has_bugfix_keyword(message, config)) {
    for (auto it = std::sregex_iterator(text.begin(), text.end(), bare_re);
         it != std::sregex_iterator(); ++it) {
      found.push_back({static_cast<std::size_t>(it->position(1)), {"bare", (*it)[1].str()}});
    }
  }
  std::stable_sort(found.begin(), found.end(),
                   [](const auto &a, const auto &b) { return a.first < b.first; });
  std::vector<IssueReference> out;
  std::set<std::pair<std::string, std::string>> seen;
  for (auto &[pos, ref] : found) {
    if (seen.insert({ref.tracker, ref.id}).second) {
      out.push_back(std::move(ref));
    }
  }
  return out;
}

LinkSummary link_commits_to_issues(Store &store, std::string_view project,
                                   const LinkerConfig &config) {
  const auto project_id = require_project(store, project);
  std::vector<Document> issue_storage;
  const auto index = index_issues(store, project_id, issue_storage);
  const auto anchors = identity_anchors(store);
  LinkSummary summary;

  for (const auto &commit : commits_of(store, project_id)) {
    const auto message = commit["message"].get<std::string>();
    if (is_blank(message)) {
      continue;
    }
    const bool keyword = has_bugfix_keyword(message, config);
    // issue id -> (approach, issue)
    std::map<std::string, std::pair<std::string, const Document *>> candidates;
    for (const auto &ref : find_issue_references(message, index.jira_keys, config)) {
      std::vector<std::pair<std::string, std::string>> lookups;
      std::string approach = "id_pattern";
      if (ref.tracker == "bare") {
        approach = "szz_heuristic";
        lookups.emplace_back("github", ref.id);
        for (const auto &key : index.jira_keys) {
          lookups.emplace_back("jira", key + "-" + ref.id);
        }
      } else {
        lookups.emplace_back(ref.tracker, ref.id);
      }
      bool resolved = false;
      for (const auto &lookup : lookups) {
        const auto it = index.by_ext.find(lookup);
        if (it == index.by_ext.end()) {
          continue;
        }
        resolved = true;
        for (const auto *issue : it->second) {
          const auto id = (*issue)["id"].get<std::string>();
          auto [pos, inserted] = candidates.try_emplace(id, approach, issue);
          if (!inserted && approach == "id_pattern") {
            pos->second.first = approach;
          }
        }
      }
      if (!resolved && ref.tracker != "bare") {
        summary.unresolved.push_back(ref.id);
      }
    }

    for (const auto &[issue_id, candidate] : candidates) {
      const auto &[approach, issue] = candidate;
      Document link{{"commit_id", commit["id"]},
                    {"issue_id", issue_id},
                    {"approach", approach},
                    {"syntactic_confidence", 1 + (keyword ? 1 : 0)},
                    {"semantic_confidence", semantic_score(commit, *issue, anchors)},
                    {"verdict", "unvalidated"}};
      const auto id = make_id(col::commit_issue_link, link);
      const auto existing = store.get(col::commit_issue_link, id);
      if (existing && (*existing)["verdict"] != "unvalidated") {
        ++summary.validated_untouched;
        continue;
      }
      if (!existing) {
        ++summary.links_created;
      }
      store.upsert(col::commit_issue_link, std::move(link));
      ++summary.links_total;
      ++summary.by_approach[approach];
    }
  }
  for (const auto &id : summary.unresolved) {
    spdlog::debug("unresolved issue reference {}", id);
  }
  return summary;
}

std::vector<std::pair<std::string, std::string>> gated_fix_commits(const Store &store,
                                                                   std::string_view project,
                                                                   const InduceOptions &options) {
  const auto project_id = require_project(store, project);
  std::map<std::string, std::string> earliest; // fix commit -> earliest bug created_at
  for (const auto &link : links_of(store, project_id)) {
    const auto verdict = link["verdict"].get<std::string>();
    if (verdict == "invalid" || (options.require_validated && verdict != "valid")) {
      continue;
    }
    const int confidence =
        link["syntactic_confidence"].get<int>() + link["semantic_confidence"].get<int>();
    if (confidence < options.min_confidence) {
      continue;
    }
    const auto issue = store.get(col::issue, link["issue_id"].get<std::string>());
    if (!issue || !is_bug_issue(*issue)) {
      continue;
    }
    const auto created = (*issue)["created_at"].get<std::string>();
    auto [it, inserted] = earliest.try_emplace(link["commit_id"].get<std::string>(), created);
    if (!inserted) {
      it->second = std::min(it->second, created);
    }
  }
  return {earliest.begin(), earliest.end()};
}

InduceSummary detect_inducing(Store &store, std::string_view project,
                              const InduceOptions &options) {
  InduceSummary summary;
  const auto project_id = require_project(store, project);
  const auto fixes = gated_fix_commits(store, project, options);
  std::map<std::string, std::unique_ptr<GitRepo>> repos;

  for (const auto &[fix_id, bug_created] : fixes) {
    const auto fix = store.get(col::commit, fix_id);
    if (!fix || (*fix)["parent_hashes"].empty()) {
      continue;
    }
    ++summary.fix_commits;
    const auto vcs_id = (*fix)["vcs_system_id"].get<std::string>();
    auto &repo = repos[vcs_id];
    if (!repo) {
      const auto vcs = store.get(col::vcs_system, vcs_id);
      repo = std::make_unique<GitRepo>(clone_path_of(*vcs));
    }
    const auto parent = (*fix)["parent_hashes"][0].get<std::string>();
    const auto fix_date = (*fix)["committer_date"].get<std::string>();
    const auto bug_created_epoch = parse_utc(bug_created);

    for (const auto &action : store.query(col::file_action, Query{}.eq("commit_id", fix_id))) {
      const auto mode = action["mode"].get<std::string>();
      if (mode == "A" || action["is_binary"].get<bool>()) {
        continue;
      }
      const auto hunks = store.query(col::hunk, Query{}.eq("file_action_id", action["id"]));
      const auto removed = removed_lines(hunks);
      if (removed.lines.empty()) {
        continue;
      }
      const auto fix_file = store.get(col::file, action["file_id"].get<std::string>());
      std::string old_path = (*fix_file)["path"].get<std::string>();
      if (action.contains("old_file_id")) {
        const auto old = store.get(col::file, action["old_file_id"].get<std::string>());
        old_path = (*old)["path"].get<std::string>();
      }

      std::map<int, BlameOrigin> origins;
      std::vector<LineClass> classes;
      try {
        origins = blame(*repo, parent, old_path, removed.lines);
        const auto content = repo->file_at(parent, old_path);
        if (content) {
          classes = classify_lines(*content, language_for_path(old_path));
        }
      } catch (const Error &e) {
        summary.errors.push_back(old_path + "@" + parent + ": " + e.what());
        spdlog::warn("blame failed for {} at {}: {}", old_path, parent, e.what());
        continue;
      }

      struct Candidate {
        std::vector<int> lines;
        std::string path;
        bool all_whitespace = true;
        bool all_quiet = true; // whitespace or comment only
      };
      std::map<std::string, Candidate> candidates;
      for (const auto &[line_no, origin] : origins) {
        auto &c = candidates[origin.commit];
        if (c.path.empty()) {
          c.path = origin.path;
        }
        c.lines.push_back(line_no);
        const auto &text = removed.content.at(line_no);
        const auto squashed = without_whitespace(text);
        LineKind kind = LineKind::code;
        if (squashed.empty() || removed.added.contains(squashed)) {
          kind = LineKind::whitespace;
        } else if (line_no - 1 < static_cast<int>(classes.size()) &&
                   classes[static_cast<std::size_t>(line_no - 1)] == LineClass::comment) {
          kind = LineKind::comment;
        }
        c.all_whitespace = c.all_whitespace && kind == LineKind::whitespace;
        c.all_quiet = c.all_quiet && kind != LineKind::code;
      }

      for (const auto &[hash, c] : candidates) {
        const auto inducing_id = commit_id_for(vcs_id, hash);
        const auto inducing = store.get(col::commit, inducing_id);
        if (!inducing) {
          summary.errors.push_back("blamed commit " + hash + " is not harvested");
          continue;
        }
        const auto inducing_date = (*inducing)["committer_date"].get<std::string>();
        if (inducing_date > fix_date) {
          summary.errors.push_back("blamed commit " + hash + " is newer than fix " +
                                   (*fix)["revision_hash"].get<std::string>());
          continue;
        }
        std::string label = "inducing";
        if (c.all_whitespace) {
          label = "filtered_whitespace";
        } else if (c.all_quiet) {
          label = "filtered_comment";
        } else if (parse_utc(inducing_date) > bug_created_epoch) {
          label = "suspect";
        }
        Document link{{"fix_commit_id", fix_id},
                      {"inducing_commit_id", inducing_id},
                      {"fix_file_action_id", action["id"]},
                      {"fix_path", old_path},
                      {"inducing_path", c.path},
                      {"blamed_lines", c.lines},
                      {"label", label}};
        const auto inducing_action =
            make_id(col::file_action,
                    {{"commit_id", inducing_id}, {"file_id", file_id_for(vcs_id, c.path)}});
        if (store.get(col::file_action, inducing_action)) {
          link["inducing_file_action_id"] = inducing_action;
        }
        store.upsert(col::inducing_link, std::move(link));
        if (label == "inducing") {
          ++summary.inducing_links;
        } else if (label == "suspect") {
          ++summary.suspects;
        } else {
          ++summary.filtered;
        }
      }
    }
  }
  mark_stage_completed(store, project_id, "induce");
  return summary;
}

} // namespace minehub
