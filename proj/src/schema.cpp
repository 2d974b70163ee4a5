#include "minehub/schema.hpp"

#include "minehub/error.hpp"

namespace minehub {

namespace {

FieldSpec str(std::string name, bool required = true) {
  return FieldSpec{std::move(name), FieldType::string, required, {}, {}};
}
FieldSpec one_of(std::string name, std::vector<std::string> values, bool required = true) {
  return FieldSpec{std::move(name), FieldType::string, required, {}, std::move(values)};
}
FieldSpec integer(std::string name, bool required = true) {
  return FieldSpec{std::move(name), FieldType::integer, required, {}, {}};
}
FieldSpec boolean(std::string name, bool required = true) {
  return FieldSpec{std::move(name), FieldType::boolean, required, {}, {}};
}
FieldSpec timestamp(std::string name, bool required = true) {
  return FieldSpec{std::move(name), FieldType::timestamp, required, {}, {}};
}
FieldSpec ref(std::string name, std::string_view target, bool required = true) {
  return FieldSpec{std::move(name), FieldType::ref, required, std::string(target), {}};
}
FieldSpec ref_list(std::string name, std::string_view target) {
  return FieldSpec{std::move(name), FieldType::ref_list, true, std::string(target), {}};
}
FieldSpec strings(std::string name, bool required = true) {
  return FieldSpec{std::move(name), FieldType::string_list, required, {}, {}};
}
FieldSpec integers(std::string name, bool required = true) {
  return FieldSpec{std::move(name), FieldType::integer_list, required, {}, {}};
}
FieldSpec object(std::string name, bool required = true) {
  return FieldSpec{std::move(name), FieldType::object, required, {}, {}};
}

std::vector<CollectionSpec> build() {
  std::vector<CollectionSpec> all;

  all.push_back({std::string(col::project), {str("name"), strings("completed_stages", false)},
                 {"name"},
                 {}});

  all.push_back({std::string(col::vcs_system),
                 {ref("project_id", col::project), str("url"), one_of("vcs_type", {"git"}),
                  str("clone_path", false), str("archive_ref", false),
                  timestamp("last_harvested", false)},
                 {"project_id", "url"},
                 {}});

  all.push_back({std::string(col::file),
                 {ref("vcs_system_id", col::vcs_system), str("path")},
                 {"vcs_system_id", "path"},
                 {}});

  all.push_back({std::string(col::commit),
                 {ref("vcs_system_id", col::vcs_system), str("revision_hash"),
                  strings("parent_hashes"), ref("author_person_id", col::person),
                  ref("committer_person_id", col::person), timestamp("author_date"),
                  integer("author_date_offset"), timestamp("committer_date"),
                  integer("committer_date_offset"), str("message"), strings("branches"),
                  object("labels", false), boolean("is_merge")},
                 {"vcs_system_id", "revision_hash"},
                 {}});

  all.push_back({std::string(col::file_action),
                 {ref("commit_id", col::commit), ref("file_id", col::file),
                  one_of("mode", {"A", "M", "D", "R", "C"}),
                  ref("old_file_id", col::file, false), integer("lines_added"),
                  integer("lines_deleted"), boolean("is_binary")},
                 {"commit_id", "file_id"},
                 {}});

  all.push_back({std::string(col::hunk),
                 {ref("file_action_id", col::file_action), integer("old_start"),
                  integer("old_lines"), integer("new_start"), integer("new_lines"),
                  str("content"), object("line_labels", false)},
                 {"file_action_id", "old_start", "new_start"},
                 {{"line_labels", {"line_labels"}, ""}}});

  all.push_back({std::string(col::issue_system),
                 {ref("project_id", col::project), str("url"),
                  one_of("tracker_type", {"jira", "github"}), str("source", false),
                  timestamp("watermark", false)},
                 {"project_id", "url"},
                 {}});

  all.push_back({std::string(col::issue),
                 {ref("issue_system_id", col::issue_system), str("external_id"), str("title"),
                  str("description"), str("issue_type"), str("issue_type_validated", false),
                  str("priority", false), str("status", false), str("resolution", false),
                  ref("reporter_person_id", col::person, false),
                  ref("assignee_person_id", col::person, false), timestamp("created_at"),
                  timestamp("updated_at"), strings("affected_versions", false),
                  strings("fixed_versions", false), str("web_url", false)},
                 {"issue_system_id", "external_id"},
                 {{"issue_type_validated", {"issue_type_validated"}, ""}}});

  all.push_back({std::string(col::issue_comment),
                 {ref("issue_id", col::issue), str("external_id"),
                  ref("author_person_id", col::person), timestamp("created_at"), str("body"),
                  integer("ordinal")},
                 {"issue_id", "external_id"},
                 {}});

  all.push_back({std::string(col::person), {str("name"), str("email")}, {"name", "email"}, {}});

  all.push_back({std::string(col::identity),
                 {ref("anchor_person_id", col::person), ref_list("person_ids", col::person)},
                 {"anchor_person_id"},
                 {}});

  all.push_back({std::string(col::commit_issue_link),
                 {ref("commit_id", col::commit), ref("issue_id", col::issue),
                  one_of("approach", {"id_pattern", "szz_heuristic"}),
                  integer("syntactic_confidence"), integer("semantic_confidence"),
                  one_of("verdict", {"unvalidated", "valid", "invalid"}),
                  str("validator", false), timestamp("validated_at", false)},
                 {"commit_id", "issue_id"},
                 {{"verdict", {"verdict", "validator", "validated_at"}, "unvalidated"}}});

  all.push_back({std::string(col::inducing_link),
                 {ref("fix_commit_id", col::commit), ref("inducing_commit_id", col::commit),
                  ref("fix_file_action_id", col::file_action),
                  ref("inducing_file_action_id", col::file_action, false), str("fix_path"),
                  str("inducing_path"), integers("blamed_lines"),
                  one_of("label", {"inducing", "suspect", "filtered_whitespace",
                                   "filtered_comment"})},
                 {"fix_file_action_id", "inducing_commit_id"},
                 {}});

  all.push_back({std::string(col::metric_record),
                 {ref("commit_id", col::commit), ref("file_id", col::file), object("metrics"),
                  strings("imports")},
                 {"commit_id", "file_id"},
                 {}});

  all.push_back({std::string(col::validation_record),
                 {integer("seq"), one_of("target_kind", {"link", "issue_type", "hunk_line"}),
                  str("target_id"), integer("line_no", false), str("value"), str("validator"),
                  timestamp("created_at")},
                 {"seq"},
                 {}});

  all.push_back({std::string(col::job),
                 {str("run_id"),
                  one_of("kind", {"harvest_vcs", "harvest_issues", "metrics_commit", "link",
                                  "induce", "label", "identify", "export"}),
                  str("target"),
                  one_of("state", {"queued", "running", "done", "failed", "vanished"}),
                  integer("attempts"), str("log", false), str("log_path", false),
                  str("error", false), timestamp("enqueued_at", false),
                  timestamp("started_at", false), timestamp("finished_at", false),
                  integer("heartbeat_ms", false), integer("not_before_ms", false)},
                 {"run_id", "kind", "target"},
                 {}});

  all.push_back({std::string(col::consistency_report),
                 {ref("project_id", col::project), timestamp("created_at"),
                  FieldSpec{"missing_metric_entries", FieldType::array, true, {}, {}},
                  strings("missing_commits"),
                  FieldSpec{"orphan_documents", FieldType::array, true, {}, {}},
                  boolean("clean")},
                 {"project_id"},
                 {}});

  return all;
}

std::string_view ordered_type_name(FieldType t) { return to_string(t); }

} // namespace

std::string_view to_string(FieldType type) {
  switch (type) {
  case FieldType::string: return "string";
  case FieldType::integer: return "integer";
  case FieldType::number: return "number";
  case FieldType::boolean: return "boolean";
  case FieldType::timestamp: return "timestamp";
  case FieldType::ref: return "ref";
  case FieldType::string_list: return "string[]";
  case FieldType::integer_list: return "integer[]";
  case FieldType::ref_list: return "ref[]";
  case FieldType::object: return "object";
  case FieldType::array: return "array";
  }
  return "unknown";
}

const FieldSpec *CollectionSpec::field(std::string_view name) const {
  for (const auto &f : fields) {
    if (f.name == name) {
      return &f;
    }
  }
  return nullptr;
}

const std::vector<CollectionSpec> &collections() {
  static const std::vector<CollectionSpec> all = build();
  return all;
}

const CollectionSpec &collection_spec(std::string_view name) {
  for (const auto &spec : collections()) {
    if (spec.name == name) {
      return spec;
    }
  }
  throw Error(ErrorCode::unknown_collection, "unknown collection: " + std::string(name));
}

nlohmann::json export_schema() {
  nlohmann::json out;
  out["version"] = 1;
  auto &list = out["collections"] = nlohmann::json::array();
  for (const auto &spec : collections()) {
    nlohmann::json c;
    c["name"] = spec.name;
    c["natural_key"] = spec.natural_key;
    auto &fields = c["fields"] = nlohmann::json::array();
    for (const auto &f : spec.fields) {
      nlohmann::json fj;
      fj["name"] = f.name;
      fj["type"] = ordered_type_name(f.type);
      fj["required"] = f.required;
      if (!f.ref_collection.empty()) {
        fj["references"] = f.ref_collection;
      }
      if (!f.enum_values.empty()) {
        fj["values"] = f.enum_values;
      }
      fields.push_back(std::move(fj));
    }
    auto &prot = c["protected_fields"] = nlohmann::json::array();
    for (const auto &g : spec.protected_groups) {
      for (const auto &f : g.fields) {
        prot.push_back(f);
      }
    }
    list.push_back(std::move(c));
  }
  return out;
}

std::string export_schema_text() { return export_schema().dump(2) + "\n"; }

} // namespace minehub
