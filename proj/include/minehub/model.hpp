#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "minehub/store.hpp"

namespace minehub {

// Lookup helpers shared by the harvesters and enrichment passes.

std::string ensure_project(Store &store, std::string_view name);
/// Throws not-found for unknown projects.
std::string require_project(const Store &store, std::string_view name);

/// Project-level stages (e.g. "induce") record completion on the project.
void mark_stage_completed(Store &store, std::string_view project_id, std::string_view stage);
bool stage_completed(const Store &store, std::string_view project_id, std::string_view stage);

std::string upsert_person(Store &store, std::string_view name, std::string_view email);
std::string person_id_for(std::string_view name, std::string_view email);
std::string file_id_for(std::string_view vcs_system_id, std::string_view path);
std::string commit_id_for(std::string_view vcs_system_id, std::string_view hash);

std::vector<Document> vcs_systems_of(const Store &store, std::string_view project_id);
std::vector<Document> issue_systems_of(const Store &store, std::string_view project_id);
/// Commits of every vcs system of the project, ordered by committer date.
std::vector<Document> commits_of(const Store &store, std::string_view project_id);
std::vector<Document> issues_of(const Store &store, std::string_view project_id);
std::vector<Document> links_of(const Store &store, std::string_view project_id);

/// Clone path recorded for a vcs system; throws missing-clone if absent.
std::string clone_path_of(const Document &vcs_system);

std::string str_or(const Document &doc, std::string_view field, std::string_view fallback = {});

/// Effective issue type: the validated type when present.
std::string effective_issue_type(const Document &issue);
bool is_bug_issue(const Document &issue);

} // namespace minehub
