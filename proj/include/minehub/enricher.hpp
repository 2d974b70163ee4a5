#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "minehub/store.hpp"

namespace minehub {

struct EnricherConfig {
  std::vector<std::string> refactoring_keywords{"refactor", "refactoring", "restructure",
                                                "cleanup", "clean up", "rename"};
  std::vector<std::string> satd_patterns{"TODO", "FIXME", "HACK", "XXX", "workaround",
                                         "temporary fix"};
  std::vector<std::string> doc_extensions{".md", ".txt", ".rst", ".adoc"};
  std::vector<std::string> doc_dirs{"docs", "doc"};
  /// Unvalidated links with syntactic confidence >= 2 count towards `bugfix`.
  bool admit_unvalidated = true;
};

inline constexpr const char *label_names[] = {"bugfix", "refactoring_keyword", "documentation",
                                              "satd_added", "satd_removed"};

struct LabelSummary {
  std::size_t commits = 0;
  std::map<std::string, std::size_t> applied; // label -> commits where true
};

bool is_documentation_path(std::string_view path, const EnricherConfig &config = {});
bool matches_satd(std::string_view comment_text, const EnricherConfig &config = {});

LabelSummary label_commits(Store &store, std::string_view project,
                           const EnricherConfig &config = {});

struct IdentitySummary {
  std::size_t persons = 0;
  std::size_t identities = 0;
};

/// Case-folded, diacritic-free, whitespace-collapsed form of a name.
std::string normalize_name(std::string_view name);

struct PersonRecord {
  std::string id;
  std::string name;
  std::string email;
};

/// Groups persons that share an email (R1), a normalized multi-token name
/// (R2) or an email local part of at least five characters (R3). Each group
/// is sorted and the groups are ordered by their first id.
std::vector<std::vector<std::string>> identity_components(const std::vector<PersonRecord> &persons);

/// Recomputes Identity documents over every stored Person.
IdentitySummary merge_identities(Store &store, std::string_view project);

} // namespace minehub
