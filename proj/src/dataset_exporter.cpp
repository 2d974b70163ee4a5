#include "minehub/dataset_exporter.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "minehub/enricher.hpp"
#include "minehub/error.hpp"
#include "minehub/git.hpp"
#include "minehub/metrics.hpp"
#include "minehub/model.hpp"
#include "minehub/text.hpp"

namespace minehub {

namespace fs = std::filesystem;

namespace {

constexpr const char *history_features[] = {"authors_count", "commit_count", "lines_added_sum",
                                            "lines_deleted_sum",
                                            "refactoring_keyword_commit_count"};

struct Release {
  std::string vcs_id;
  std::string hash;
  std::string commit_id;
  std::int64_t when = 0;
  std::unique_ptr<GitRepo> repo;
};

Release resolve_release(const Store &store, const std::string &project_id,
                        const std::string &revision) {
  for (const auto &vcs : vcs_systems_of(store, project_id)) {
    auto repo = std::make_unique<GitRepo>(clone_path_of(vcs));
    const auto hash = repo->resolve_commit(revision);
    if (!hash) {
      continue;
    }
    const auto vcs_id = vcs["id"].get<std::string>();
    const auto commit_id = commit_id_for(vcs_id, *hash);
    const auto commit = store.get(col::commit, commit_id);
    if (!commit) {
      throw Error(ErrorCode::not_found, "release " + revision + " is not harvested");
    }
    return {vcs_id, *hash, commit_id, parse_utc((*commit)["committer_date"].get<std::string>()),
            std::move(repo)};
  }
  throw Error(ErrorCode::not_found, "unknown revision " + revision);
}

std::string format_number(double v) {
  if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 9.0e15) {
    return std::to_string(static_cast<std::int64_t>(v));
  }
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) {
    return std::string(s);
  }
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') {
      out += '"';
    }
    out += c;
  }
  out += '"';
  return out;
}

} // namespace

std::vector<DatasetRow> build_release_dataset(const Store &store, std::string_view project,
                                              const ExportOptions &options) {
  if (options.history_window_days < 0 || options.label_window_days < 0) {
    throw Error(ErrorCode::invalid_argument, "windows must be non-negative");
  }
  const auto project_id = require_project(store, project);
  if (!stage_completed(store, project_id, "induce")) {
    throw Error(ErrorCode::precondition, "induce stage has not run for project " +
                                             std::string(project));
  }
  const auto release = resolve_release(store, project_id, options.release);
  const auto ancestors_list = release.repo->rev_list(release.hash);
  const std::unordered_set<std::string> ancestors(ancestors_list.begin(), ancestors_list.end());

  std::map<std::string, DatasetRow> rows;
  for (const auto &entry : eligible_tree_entries(*release.repo, release.hash)) {
    if (language_for_path(entry.path) == Language::unknown) {
      continue;
    }
    DatasetRow row;
    row.path = entry.path;
    const auto record = store.get(
        col::metric_record, make_id(col::metric_record,
                                    {{"commit_id", release.commit_id},
                                     {"file_id", file_id_for(release.vcs_id, entry.path)}}));
    if (!record) {
      throw Error(ErrorCode::precondition,
                  "no metrics for " + entry.path + " at " + release.hash);
    }
    for (const auto &[key, value] : (*record)["metrics"].items()) {
      if (value.is_number()) {
        row.features[key] = value.get<double>();
      }
    }
    row.features["import_count"] = static_cast<double>((*record)["imports"].size());
    for (const char *f : history_features) {
      row.features[f] = 0;
    }
    rows.emplace(entry.path, std::move(row));
  }

  // History window: ancestors of the release committed in (R - H, R].
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
  const auto history_start = release.when - options.history_window_days * seconds_per_day;
  std::unordered_map<std::string, const Document *> window_commits;
  const auto commits = store.query(col::commit, Query{}.eq("vcs_system_id", release.vcs_id));
  std::unordered_map<std::string, const Document *> commit_by_id;
  for (const auto &c : commits) {
    commit_by_id[c["id"].get<std::string>()] = &c;
    const auto when = parse_utc(c["committer_date"].get<std::string>());
    if (when > history_start && when <= release.when &&
        ancestors.contains(c["revision_hash"].get<std::string>())) {
      window_commits[c["id"].get<std::string>()] = &c;
    }
  }
  std::unordered_map<std::string, std::string> path_of;
  for (const auto &f : store.query(col::file, Query{}.eq("vcs_system_id", release.vcs_id))) {
    path_of[f["id"].get<std::string>()] = f["path"].get<std::string>();
  }
  std::map<std::string, std::set<std::string>> authors;
  for (const auto &action : store.query(col::file_action)) {
    const auto it = window_commits.find(action["commit_id"].get<std::string>());
    if (it == window_commits.end()) {
      continue;
    }
    const auto row = rows.find(path_of[action["file_id"].get<std::string>()]);
    if (row == rows.end()) {
      continue;
    }
    const auto &commit = *it->second;
    auto &f = row->second.features;
    f["commit_count"] += 1;
    f["lines_added_sum"] += action["lines_added"].get<double>();
    f["lines_deleted_sum"] += action["lines_deleted"].get<double>();
    if (commit.contains("labels") && commit["labels"].value("refactoring_keyword", false)) {
      f["refactoring_keyword_commit_count"] += 1;
    }
    const auto author = commit["author_person_id"].get<std::string>();
    const auto a = anchor.find(author);
    authors[row->first].insert(a == anchor.end() ? author : a->second);
  }
  for (auto &[path, ids] : authors) {
    rows[path].features["authors_count"] = static_cast<double>(ids.size());
  }

  // Bug labels from inducing links whose fix lands in (R, R + L].
  const auto label_end = release.when + options.label_window_days * seconds_per_day;
  std::map<std::string, std::vector<std::string>> fix_issues;
  const auto issues_for_fix = [&](const std::string &fix_id) -> const std::vector<std::string> & {
    auto [it, inserted] = fix_issues.try_emplace(fix_id);
    if (!inserted) {
      return it->second;
    }
    for (const auto &link : store.query(col::commit_issue_link, Query{}.eq("commit_id", fix_id))) {
      const auto verdict = link["verdict"].get<std::string>();
      if (verdict == "invalid" || (options.validated_only && verdict != "valid")) {
        continue;
      }
      const auto issue = store.get(col::issue, link["issue_id"].get<std::string>());
      if (!issue) {
        continue;
      }
      const bool bug = options.validated_only
                           ? to_lower_ascii(str_or(*issue, "issue_type_validated")) == "bug"
                           : is_bug_issue(*issue);
      if (bug) {
        it->second.push_back((*issue)["external_id"].get<std::string>());
      }
    }
    return it->second;
  };
  std::map<std::string, std::set<std::string>> bugs;
  for (const auto &link : store.query(col::inducing_link, Query{}.eq("label", "inducing"))) {
    const auto fix = commit_by_id.find(link["fix_commit_id"].get<std::string>());
    const auto inducing = commit_by_id.find(link["inducing_commit_id"].get<std::string>());
    if (fix == commit_by_id.end() || inducing == commit_by_id.end()) {
      continue;
    }
    if (!ancestors.contains((*inducing->second)["revision_hash"].get<std::string>())) {
      continue;
    }
    const auto fixed_at = parse_utc((*fix->second)["committer_date"].get<std::string>());
    if (fixed_at <= release.when || fixed_at > label_end) {
      continue;
    }
    const auto &ids = issues_for_fix(fix->first);
    if (ids.empty()) {
      continue;
    }
    for (const auto &path : {link["inducing_path"].get<std::string>(),
                             link["fix_path"].get<std::string>()}) {
      if (rows.contains(path)) {
        bugs[path].insert(ids.begin(), ids.end());
      }
    }
  }

  std::vector<DatasetRow> out;
  out.reserve(rows.size());
  for (auto &[path, row] : rows) {
    if (const auto it = bugs.find(path); it != bugs.end()) {
      row.bug_issue_ids.assign(it->second.begin(), it->second.end());
    }
    row.bug_count = static_cast<int>(row.bug_issue_ids.size());
    out.push_back(std::move(row));
  }
  return out;
}

std::string render_dataset(const std::vector<DatasetRow> &rows) {
  std::set<std::string> names;
  for (const auto &row : rows) {
    for (const auto &[k, v] : row.features) {
      names.insert(k);
    }
  }
  std::string out = "path";
  for (const auto &n : names) {
    out += ',' + csv_field(n);
  }
  out += ",bug_count,bug_issue_ids\n";
  for (const auto &row : rows) {
    out += csv_field(row.path);
    for (const auto &n : names) {
      const auto it = row.features.find(n);
      out += ',' + format_number(it == row.features.end() ? 0.0 : it->second);
    }
    out += ',' + std::to_string(row.bug_count) + ',' + csv_field(join(row.bug_issue_ids, ";"));
    out += '\n';
  }
  return out;
}

ExportSummary export_release(const Store &store, std::string_view project,
                             const ExportOptions &options, const fs::path &out) {
  const auto rows = build_release_dataset(store, project, options);
  const auto text = render_dataset(rows);
  if (out.has_parent_path()) {
    fs::create_directories(out.parent_path());
  }
  const auto tmp = fs::path(out.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) {
      throw Error(ErrorCode::io, "cannot write " + out.string());
    }
    f << text;
  }
  fs::rename(tmp, out);
  ExportSummary summary;
  summary.rows = rows.size();
  for (const auto &row : rows) {
    summary.buggy_rows += row.bug_count > 0;
  }
  const auto project_id = require_project(store, project);
  for (const auto &vcs : vcs_systems_of(store, project_id)) {
    if (auto hash = GitRepo(clone_path_of(vcs)).resolve_commit(options.release)) {
      summary.release_hash = *hash;
      break;
    }
  }
  return summary;
}

} // namespace minehub
