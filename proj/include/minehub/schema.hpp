#pragma once

#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace minehub {

/// Collection names. Every stored document lives in exactly one of these.
namespace col {
inline constexpr std::string_view project = "project";
inline constexpr std::string_view vcs_system = "vcs_system";
inline constexpr std::string_view file = "file";
inline constexpr std::string_view commit = "commit";
inline constexpr std::string_view file_action = "file_action";
inline constexpr std::string_view hunk = "hunk";
inline constexpr std::string_view issue_system = "issue_system";
inline constexpr std::string_view issue = "issue";
inline constexpr std::string_view issue_comment = "issue_comment";
inline constexpr std::string_view person = "person";
inline constexpr std::string_view identity = "identity";
inline constexpr std::string_view commit_issue_link = "commit_issue_link";
inline constexpr std::string_view inducing_link = "inducing_link";
inline constexpr std::string_view metric_record = "metric_record";
inline constexpr std::string_view validation_record = "validation_record";
inline constexpr std::string_view job = "job";
inline constexpr std::string_view consistency_report = "consistency_report";
} // namespace col

enum class FieldType {
  string,
  integer,
  number,
  boolean,
  timestamp,
  ref,
  string_list,
  integer_list,
  ref_list,
  object,
  array,
};

std::string_view to_string(FieldType type);

struct FieldSpec {
  std::string name;
  FieldType type = FieldType::string;
  bool required = true;
  std::string ref_collection;           // for ref / ref_list
  std::vector<std::string> enum_values; // closed value set for strings
};

/// Fields that only validation writes may change once `guard` is set.
/// `guard` counts as set when present, non-null, not equal to `unset_value`
/// and not an empty object/string.
struct ProtectedGroup {
  std::string guard;
  std::vector<std::string> fields;
  std::string unset_value;
};

struct CollectionSpec {
  std::string name;
  std::vector<FieldSpec> fields;
  std::vector<std::string> natural_key;
  std::vector<ProtectedGroup> protected_groups;

  const FieldSpec *field(std::string_view name) const;
};

/// Implicit fields present on every document.
inline constexpr std::string_view id_field = "id";
inline constexpr std::string_view encoding_flag_field = "had_encoding_errors";

const std::vector<CollectionSpec> &collections();
const CollectionSpec &collection_spec(std::string_view name);

nlohmann::json export_schema();
/// Pretty-printed, byte-stable rendering of export_schema().
std::string export_schema_text();

} // namespace minehub
