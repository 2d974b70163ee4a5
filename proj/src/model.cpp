#include "minehub/model.hpp"

#include <algorithm>
#include <unordered_set>

#include "minehub/error.hpp"
#include "minehub/text.hpp"

namespace minehub {

std::string ensure_project(Store &store, std::string_view name) {
  if (name.empty()) {
    throw Error(ErrorCode::invalid_argument, "project name must be non-empty");
  }
  Document doc{{"name", std::string(name)}};
  const auto id = make_id(col::project, doc);
  if (store.get(col::project, id)) {
    return id;
  }
  return store.upsert(col::project, std::move(doc));
}

void mark_stage_completed(Store &store, std::string_view project_id, std::string_view stage) {
  store.modify(col::project, project_id, [&](Document &doc) {
    auto stages = doc.value("completed_stages", std::vector<std::string>{});
    if (std::find(stages.begin(), stages.end(), stage) != stages.end()) {
      return false;
    }
    stages.emplace_back(stage);
    std::sort(stages.begin(), stages.end());
    doc["completed_stages"] = stages;
    return true;
  });
}

bool stage_completed(const Store &store, std::string_view project_id, std::string_view stage) {
  const auto doc = store.get(col::project, project_id);
  if (!doc) {
    return false;
  }
  const auto stages = doc->value("completed_stages", std::vector<std::string>{});
  return std::find(stages.begin(), stages.end(), stage) != stages.end();
}

std::string require_project(const Store &store, std::string_view name) {
  const auto id = make_id(col::project, {{"name", std::string(name)}});
  if (!store.get(col::project, id)) {
    throw Error(ErrorCode::not_found, "unknown project: " + std::string(name));
  }
  return id;
}

std::string upsert_person(Store &store, std::string_view name, std::string_view email) {
  return store.upsert(col::person, {{"name", std::string(name)}, {"email", std::string(email)}});
}

std::string person_id_for(std::string_view name, std::string_view email) {
  return make_id(col::person, {{"name", std::string(name)}, {"email", std::string(email)}});
}

std::string file_id_for(std::string_view vcs_system_id, std::string_view path) {
  return make_id(col::file,
                 {{"vcs_system_id", std::string(vcs_system_id)}, {"path", std::string(path)}});
}

std::string commit_id_for(std::string_view vcs_system_id, std::string_view hash) {
  return make_id(col::commit, {{"vcs_system_id", std::string(vcs_system_id)},
                               {"revision_hash", std::string(hash)}});
}

std::vector<Document> vcs_systems_of(const Store &store, std::string_view project_id) {
  return store.query(col::vcs_system, Query{}.eq("project_id", std::string(project_id)));
}

std::vector<Document> issue_systems_of(const Store &store, std::string_view project_id) {
  return store.query(col::issue_system, Query{}.eq("project_id", std::string(project_id)));
}

std::vector<Document> commits_of(const Store &store, std::string_view project_id) {
  std::vector<Document> out;
  for (const auto &vcs : vcs_systems_of(store, project_id)) {
    auto part = store.query(col::commit, Query{}
                                             .eq("vcs_system_id", vcs["id"])
                                             .order_by("committer_date"));
    out.insert(out.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return out;
}

std::vector<Document> issues_of(const Store &store, std::string_view project_id) {
  std::vector<Document> out;
  for (const auto &sys : issue_systems_of(store, project_id)) {
    auto part = store.query(col::issue, Query{}.eq("issue_system_id", sys["id"]));
    out.insert(out.end(), std::make_move_iterator(part.begin()),
               std::make_move_iterator(part.end()));
  }
  return out;
}

std::vector<Document> links_of(const Store &store, std::string_view project_id) {
  std::unordered_set<std::string> commit_ids;
  for (const auto &c : commits_of(store, project_id)) {
    commit_ids.insert(c["id"].get<std::string>());
  }
  std::vector<Document> out;
  for (auto &link : store.query(col::commit_issue_link)) {
    if (commit_ids.contains(link["commit_id"].get<std::string>())) {
      out.push_back(std::move(link));
    }
  }
  return out;
}

std::string clone_path_of(const Document &vcs_system) {
  const auto path = str_or(vcs_system, "clone_path");
  if (path.empty()) {
    throw Error(ErrorCode::missing_clone,
                "no local clone recorded for " + str_or(vcs_system, "url", "vcs system"));
  }
  return path;
}

std::string str_or(const Document &doc, std::string_view field, std::string_view fallback) {
  const auto it = doc.find(field);
  if (it == doc.end() || !it->is_string()) {
    return std::string(fallback);
  }
  return it->get<std::string>();
}

std::string effective_issue_type(const Document &issue) {
  const auto validated = str_or(issue, "issue_type_validated");
  return validated.empty() ? str_or(issue, "issue_type") : validated;
}

bool is_bug_issue(const Document &issue) {
  return to_lower_ascii(effective_issue_type(issue)) == "bug";
}

} // namespace minehub
