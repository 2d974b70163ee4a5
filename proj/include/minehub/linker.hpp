#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "minehub/store.hpp"

namespace minehub {

struct LinkerConfig {
  std::vector<std::string> bugfix_keywords{"fix", "fixes", "fixed", "bug",
                                           "defect", "fault", "patch"};
};

struct LinkSummary {
  std::size_t links_created = 0;
  std::size_t links_total = 0;
  std::size_t validated_untouched = 0;
  std::map<std::string, std::size_t> by_approach;
  std::vector<std::string> unresolved; // candidate ids with no matching issue
};

/// Issue references found in one commit message.
struct IssueReference {
  std::string tracker; // "jira", "github" or "bare"
  std::string id;      // "DERBY-2", "12" or a bare number
};

/// Jira keys restricted to `jira_keys`, `#N` references and, when the
/// message contains a bugfix keyword, bare numbers. Ordered by position,
/// without duplicates.
std::vector<IssueReference> find_issue_references(std::string_view message,
                                                  const std::vector<std::string> &jira_keys,
                                                  const LinkerConfig &config = {});

bool has_bugfix_keyword(std::string_view message, const LinkerConfig &config = {});

/// Links every commit of the project to the issues its message references,
/// scoring each link. Links carrying a validation verdict are never touched.
LinkSummary link_commits_to_issues(Store &store, std::string_view project,
                                   const LinkerConfig &config = {});

struct InduceOptions {
  /// Gate on syntactic + semantic confidence of the link.
  int min_confidence = 0;
  /// Only links with verdict "valid" qualify.
  bool require_validated = false;
};

struct InduceSummary {
  std::size_t fix_commits = 0;
  std::size_t inducing_links = 0;
  std::size_t suspects = 0;
  std::size_t filtered = 0;
  std::vector<std::string> errors;
};

/// Bugfix commits admitted by the gate, as (commit id, earliest linked bug
/// issue created_at), ordered by commit id.
std::vector<std::pair<std::string, std::string>> gated_fix_commits(const Store &store,
                                                                   std::string_view project,
                                                                   const InduceOptions &options);

/// Blames the lines each fix removes or changes at the fix's first parent and
/// stores one labelled InducingLink per (fix file action, blamed commit).
InduceSummary detect_inducing(Store &store, std::string_view project,
                              const InduceOptions &options = {});

} // namespace minehub
