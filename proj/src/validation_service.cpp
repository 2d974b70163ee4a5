#include "minehub/validation_service.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "minehub/error.hpp"
#include "minehub/model.hpp"
#include "minehub/text.hpp"

namespace minehub {

namespace {

constexpr UpsertOptions validation_write{true};

std::string require_validator(std::string_view validator) {
  const auto v = trim(validator);
  if (v.empty()) {
    throw Error(ErrorCode::invalid_argument, "validator name is required");
  }
  return std::string(v);
}

Document require_doc(const Store &store, std::string_view collection, std::string_view id,
                     std::string_view what) {
  auto doc = store.get(collection, id);
  if (!doc) {
    throw Error(ErrorCode::not_found, "unknown " + std::string(what) + ": " + std::string(id));
  }
  return *doc;
}

void apply_link_verdict(Store &store, const std::string &id, const std::string &value,
                        const std::string &validator, const std::string &at) {
  store.modify(
      col::commit_issue_link, id,
      [&](Document &doc) {
        doc["verdict"] = value;
        doc["validator"] = validator;
        doc["validated_at"] = at;
        return true;
      },
      validation_write);
}

void apply_issue_type(Store &store, const std::string &id, const std::string &type) {
  store.modify(
      col::issue, id,
      [&](Document &doc) {
        doc["issue_type_validated"] = type;
        return true;
      },
      validation_write);
}

void apply_hunk_label(Store &store, const std::string &id, int line_no, const std::string &label) {
  store.modify(
      col::hunk, id,
      [&](Document &doc) {
        if (!doc.contains("line_labels")) {
          doc["line_labels"] = Document::object();
        }
        doc["line_labels"][std::to_string(line_no)] = label;
        return true;
      },
      validation_write);
}

std::vector<Document> commits_by_hash(const Store &store, std::string_view hash) {
  auto found = store.query(col::commit, Query{}.eq("revision_hash", std::string(hash)));
  if (found.empty()) {
    throw Error(ErrorCode::not_found, "unknown commit: " + std::string(hash));
  }
  return found;
}

std::string path_of(const Store &store, const Document &action, const char *field) {
  if (!action.contains(field)) {
    return {};
  }
  const auto file = store.get(col::file, action[field].get<std::string>());
  return file ? (*file)["path"].get<std::string>() : std::string();
}

int http_status(ErrorCode code) {
  switch (code) {
  case ErrorCode::not_found:
  case ErrorCode::unknown_collection: return 404;
  case ErrorCode::invalid_argument:
  case ErrorCode::unknown_field:
  case ErrorCode::missing_natural_key:
  case ErrorCode::schema_violation:
  case ErrorCode::malformed_payload:
  case ErrorCode::taxonomy:
  case ErrorCode::out_of_range: return 400;
  case ErrorCode::precondition: return 409;
  default: return 500;
  }
}

void send_json(httplib::Response &res, const Document &body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json; charset=utf-8");
}

void send_error(httplib::Response &res, int status, std::string_view code,
                std::string_view message) {
  send_json(res, {{"code", std::string(code)}, {"message", std::string(message)}}, status);
}

Document parse_body(const httplib::Request &req) {
  auto body = Document::parse(req.body, nullptr, false);
  if (body.is_discarded() || !body.is_object()) {
    throw Error(ErrorCode::malformed_payload, "request body must be a JSON object");
  }
  return body;
}

std::string body_string(const Document &body, const char *field) {
  const auto it = body.find(field);
  if (it == body.end() || !it->is_string()) {
    throw Error(ErrorCode::invalid_argument, std::string("missing string field ") + field);
  }
  return it->get<std::string>();
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
  return [fn](const httplib::Request &req, httplib::Response &res) {
    try {
      send_json(res, fn(req));
    } catch (const Error &e) {
      send_error(res, http_status(e.code()), to_string(e.code()), e.what());
    } catch (const std::exception &e) {
      spdlog::error("request {} {} failed: {}", req.method, req.path, e.what());
      send_error(res, 500, "internal", e.what());
    }
  };
}

} // namespace

ValidationService::ValidationService(Store &store, std::vector<std::string> taxonomy)
    : store_(store), taxonomy_(std::move(taxonomy)) {}

Document ValidationService::projects() const {
  Document out = Document::array();
  for (const auto &p : store_.query(col::project)) {
    out.push_back({{"id", p["id"]}, {"name", p["name"]}});
  }
  return out;
}

Document ValidationService::stats(std::string_view project) const {
  const auto project_id = require_project(store_, project);
  const auto commits = commits_of(store_, project_id);
  const auto issues = issues_of(store_, project_id);
  std::size_t files = 0;
  for (const auto &vcs : vcs_systems_of(store_, project_id)) {
    files += store_.count(col::file, Query{}.eq("vcs_system_id", vcs["id"]));
  }
  const auto links = links_of(store_, project_id);
  const auto validated = std::count_if(links.begin(), links.end(), [](const auto &l) {
    return l["verdict"] != "unvalidated";
  });
  std::unordered_set<std::string> persons;
  for (const auto &c : commits) {
    persons.insert(c["author_person_id"].get<std::string>());
    persons.insert(c["committer_person_id"].get<std::string>());
  }
  for (const auto &i : issues) {
    for (const char *f : {"reporter_person_id", "assignee_person_id"}) {
      if (i.contains(f)) {
        persons.insert(i[f].get<std::string>());
      }
    }
  }
  std::size_t identities = 0;
  for (const auto &identity : store_.query(col::identity)) {
    const auto &ids = identity["person_ids"];
    if (std::any_of(ids.begin(), ids.end(),
                    [&](const auto &p) { return persons.contains(p.template get<std::string>()); })) {
      ++identities;
    }
  }
  return {{"commits", commits.size()},
          {"issues", issues.size()},
          {"files", files},
          {"links", links.size()},
          {"validated_links", validated},
          {"identities", identities}};
}

Document ValidationService::commit_graph(std::string_view project, std::string_view filter,
                                         std::string_view query) const {
  const auto project_id = require_project(store_, project);
  const bool by_message = filter == "message" || filter == "message_query";
  if (filter != "all" && filter != "bugfix" && !by_message) {
    throw Error(ErrorCode::invalid_argument, "invalid filter: " + std::string(filter));
  }
  if (by_message && is_blank(query)) {
    throw Error(ErrorCode::invalid_argument, "message filter needs a non-empty query");
  }
  const auto needle = to_lower_ascii(query);
  std::vector<Document> kept;
  for (const auto &c : commits_of(store_, project_id)) {
    bool keep = true;
    if (filter == "bugfix") {
      keep = c.contains("labels") && c["labels"].value("bugfix", false);
    } else if (by_message) {
      keep = to_lower_ascii(c["message"].get<std::string>()).find(needle) != std::string::npos;
    }
    if (keep) {
      kept.push_back(c);
    }
  }
  std::sort(kept.begin(), kept.end(), [](const auto &a, const auto &b) {
    return std::tie(a["committer_date"], a["revision_hash"]) <
           std::tie(b["committer_date"], b["revision_hash"]);
  });
  std::set<std::string> present;
  for (const auto &c : kept) {
    present.insert(c["revision_hash"].get<std::string>());
  }
  Document nodes = Document::array();
  std::vector<std::pair<std::string, std::string>> edges;
  for (const auto &c : kept) {
    const auto hash = c["revision_hash"].get<std::string>();
    nodes.push_back({{"id", c["id"]},
                     {"hash", hash},
                     {"message", c["message"]},
                     {"committer_date", c["committer_date"]},
                     {"parents", c["parent_hashes"]},
                     {"branches", c["branches"]},
                     {"labels", c.value("labels", Document::object())}});
    for (const auto &p : c["parent_hashes"]) {
      if (present.contains(p.get<std::string>())) {
        edges.emplace_back(p.get<std::string>(), hash);
      }
    }
  }
  std::sort(edges.begin(), edges.end());
  Document edge_docs = Document::array();
  for (const auto &[from, to] : edges) {
    edge_docs.push_back({{"parent", from}, {"child", to}});
  }
  return {{"nodes", nodes}, {"edges", edge_docs}};
}

Document ValidationService::links(std::string_view project, std::string_view status) const {
  if (!status.empty() && status != "unvalidated" && status != "valid" && status != "invalid") {
    throw Error(ErrorCode::invalid_argument, "invalid status: " + std::string(status));
  }
  const auto project_id = require_project(store_, project);
  Document out = Document::array();
  for (auto &link : links_of(store_, project_id)) {
    if (!status.empty() && link["verdict"] != status) {
      continue;
    }
    const auto commit = store_.get(col::commit, link["commit_id"].get<std::string>());
    const auto issue = store_.get(col::issue, link["issue_id"].get<std::string>());
    if (commit) {
      link["commit_hash"] = (*commit)["revision_hash"];
      link["commit_message"] = (*commit)["message"];
    }
    if (issue) {
      link["issue_external_id"] = (*issue)["external_id"];
      link["issue_title"] = (*issue)["title"];
    }
    out.push_back(std::move(link));
  }
  return out;
}

Document ValidationService::issue(std::string_view issue_id) const {
  auto doc = require_doc(store_, col::issue, issue_id, "issue");
  Document commits = Document::array();
  for (const auto &link :
       store_.query(col::commit_issue_link, Query{}.eq("issue_id", std::string(issue_id)))) {
    if (const auto c = store_.get(col::commit, link["commit_id"].get<std::string>())) {
      commits.push_back({{"id", (*c)["id"]},
                         {"hash", (*c)["revision_hash"]},
                         {"message", (*c)["message"]},
                         {"link_id", link["id"]},
                         {"verdict", link["verdict"]}});
    }
  }
  doc["commits"] = commits;
  Document comments = Document::array();
  auto stored = store_.query(col::issue_comment, Query{}
                                                     .eq("issue_id", std::string(issue_id))
                                                     .order_by("created_at")
                                                     .order_by("ordinal"));
  for (auto &c : stored) {
    comments.push_back(std::move(c));
  }
  doc["comments"] = comments;
  return doc;
}

Document ValidationService::commit(std::string_view hash) const {
  auto doc = commits_by_hash(store_, hash).front();
  Document actions = Document::array();
  for (auto a : store_.query(col::file_action, Query{}.eq("commit_id", doc["id"]))) {
    a["path"] = path_of(store_, a, "file_id");
    if (a.contains("old_file_id")) {
      a["old_path"] = path_of(store_, a, "old_file_id");
    }
    actions.push_back(std::move(a));
  }
  doc["file_actions"] = actions;
  Document links = Document::array();
  for (const auto &link : store_.query(col::commit_issue_link, Query{}.eq("commit_id", doc["id"]))) {
    Document l = link;
    if (const auto issue = store_.get(col::issue, link["issue_id"].get<std::string>())) {
      l["issue_external_id"] = (*issue)["external_id"];
    }
    links.push_back(std::move(l));
  }
  doc["links"] = links;
  return doc;
}

Document ValidationService::commit_hunks(std::string_view hash) const {
  const auto doc = commits_by_hash(store_, hash).front();
  Document out = Document::array();
  for (const auto &a : store_.query(col::file_action, Query{}.eq("commit_id", doc["id"]))) {
    Document hunks = Document::array();
    for (auto h : store_.query(col::hunk, Query{}.eq("file_action_id", a["id"]))) {
      hunks.push_back(std::move(h));
    }
    out.push_back({{"file_action_id", a["id"]},
                   {"path", path_of(store_, a, "file_id")},
                   {"mode", a["mode"]},
                   {"hunks", hunks}});
  }
  std::sort(out.begin(), out.end(),
            [](const auto &x, const auto &y) { return x["path"] < y["path"]; });
  return out;
}

std::int64_t ValidationService::append_record(std::string_view kind, std::string_view target,
                                              std::string_view value, std::string_view validator,
                                              std::optional<int> line_no,
                                              const std::string &created_at) {
  std::int64_t seq = 1;
  for (const auto &r : store_.query(col::validation_record)) {
    seq = std::max(seq, r["seq"].get<std::int64_t>() + 1);
  }
  Document record{{"seq", seq},
                  {"target_kind", std::string(kind)},
                  {"target_id", std::string(target)},
                  {"value", std::string(value)},
                  {"validator", std::string(validator)},
                  {"created_at", created_at}};
  if (line_no) {
    record["line_no"] = *line_no;
  }
  store_.upsert(col::validation_record, std::move(record));
  return seq;
}

Document ValidationService::set_link_verdict(std::string_view link_id, std::string_view value,
                                             std::string_view validator) {
  const auto who = require_validator(validator);
  if (value != "valid" && value != "invalid") {
    throw Error(ErrorCode::invalid_argument, "verdict must be valid or invalid");
  }
  std::lock_guard lock(write_mutex_);
  require_doc(store_, col::commit_issue_link, link_id, "link");
  const auto now = format_utc(now_epoch_seconds());
  append_record("link", link_id, value, who, std::nullopt, now);
  apply_link_verdict(store_, std::string(link_id), std::string(value), who, now);
  return *store_.get(col::commit_issue_link, link_id);
}

Document ValidationService::set_issue_type(std::string_view issue_id,
                                           std::string_view validated_type,
                                           std::string_view validator) {
  const auto who = require_validator(validator);
  if (std::find(taxonomy_.begin(), taxonomy_.end(), validated_type) == taxonomy_.end()) {
    throw Error(ErrorCode::taxonomy, "issue type outside taxonomy: " + std::string(validated_type));
  }
  std::lock_guard lock(write_mutex_);
  require_doc(store_, col::issue, issue_id, "issue");
  append_record("issue_type", issue_id, validated_type, who, std::nullopt,
                format_utc(now_epoch_seconds()));
  apply_issue_type(store_, std::string(issue_id), std::string(validated_type));
  return *store_.get(col::issue, issue_id);
}

Document ValidationService::set_hunk_line_label(std::string_view hunk_id, int line_no,
                                                std::string_view label,
                                                std::string_view validator) {
  const auto who = require_validator(validator);
  if (std::find(hunk_line_labels.begin(), hunk_line_labels.end(), label) ==
      hunk_line_labels.end()) {
    throw Error(ErrorCode::invalid_argument, "unknown line label: " + std::string(label));
  }
  std::lock_guard lock(write_mutex_);
  const auto hunk = require_doc(store_, col::hunk, hunk_id, "hunk");
  const int first = hunk["new_start"].get<int>();
  const int last = first + hunk["new_lines"].get<int>() - 1;
  if (line_no < first || line_no > last) {
    throw Error(ErrorCode::out_of_range, "line " + std::to_string(line_no) +
                                             " outside hunk lines " + std::to_string(first) +
                                             ".." + std::to_string(last));
  }
  append_record("hunk_line", hunk_id, label, who, line_no, format_utc(now_epoch_seconds()));
  apply_hunk_label(store_, std::string(hunk_id), line_no, std::string(label));
  return *store_.get(col::hunk, hunk_id);
}

ReplaySummary replay_validation_log(Store &store) {
  ReplaySummary summary;
  auto records = store.query(col::validation_record);
  std::sort(records.begin(), records.end(),
            [](const auto &a, const auto &b) { return a["seq"] < b["seq"]; });
  for (const auto &r : records) {
    const auto kind = r["target_kind"].get<std::string>();
    const auto target = r["target_id"].get<std::string>();
    const auto value = r["value"].get<std::string>();
    bool present = false;
    if (kind == "link") {
      present = store.get(col::commit_issue_link, target).has_value();
      if (present) {
        apply_link_verdict(store, target, value, r["validator"].get<std::string>(),
                           r["created_at"].get<std::string>());
      }
    } else if (kind == "issue_type") {
      present = store.get(col::issue, target).has_value();
      if (present) {
        apply_issue_type(store, target, value);
      }
    } else if (kind == "hunk_line") {
      present = store.get(col::hunk, target).has_value();
      if (present) {
        apply_hunk_label(store, target, r["line_no"].get<int>(), value);
      }
    }
    present ? ++summary.applied : ++summary.skipped;
  }
  return summary;
}

std::unique_ptr<httplib::Server> make_validation_server(ValidationService &service,
                                                        const std::filesystem::path &static_dir) {
  auto server = std::make_unique<httplib::Server>();
  auto &s = *server;
  s.Get("/api/projects", guarded([&service](const httplib::Request &) {
          return service.projects();
        }));
  s.Get(R"(/api/projects/([^/]+)/stats)", guarded([&service](const httplib::Request &req) {
          return service.stats(req.matches[1].str());
        }));
  s.Get(R"(/api/projects/([^/]+)/commit-graph)",
        guarded([&service](const httplib::Request &req) {
          const auto filter = req.has_param("filter") ? req.get_param_value("filter") : "all";
          return service.commit_graph(req.matches[1].str(), filter, req.get_param_value("q"));
        }));
  s.Get("/api/links", guarded([&service](const httplib::Request &req) {
          if (!req.has_param("project")) {
            throw Error(ErrorCode::invalid_argument, "project parameter is required");
          }
          return service.links(req.get_param_value("project"), req.get_param_value("status"));
        }));
  s.Post(R"(/api/links/([^/]+)/verdict)", guarded([&service](const httplib::Request &req) {
           const auto body = parse_body(req);
           return service.set_link_verdict(req.matches[1].str(), body_string(body, "value"),
                                           body_string(body, "validator"));
         }));
  s.Get(R"(/api/issues/([^/]+))", guarded([&service](const httplib::Request &req) {
          return service.issue(req.matches[1].str());
        }));
  s.Post(R"(/api/issues/([^/]+)/type)", guarded([&service](const httplib::Request &req) {
           const auto body = parse_body(req);
           return service.set_issue_type(req.matches[1].str(),
                                         body_string(body, "validated_type"),
                                         body_string(body, "validator"));
         }));
  s.Get(R"(/api/commits/([^/]+))", guarded([&service](const httplib::Request &req) {
          return service.commit(req.matches[1].str());
        }));
  s.Get(R"(/api/commits/([^/]+)/hunks)", guarded([&service](const httplib::Request &req) {
          return service.commit_hunks(req.matches[1].str());
        }));
  s.Post(R"(/api/hunks/([^/]+)/lines)", guarded([&service](const httplib::Request &req) {
           const auto body = parse_body(req);
           const auto it = body.find("line_no");
           if (it == body.end() || !it->is_number_integer()) {
             throw Error(ErrorCode::invalid_argument, "missing integer field line_no");
           }
           return service.set_hunk_line_label(req.matches[1].str(), it->get<int>(),
                                              body_string(body, "label"),
                                              body_string(body, "validator"));
         }));
  if (!static_dir.empty()) {
    if (!s.set_mount_point("/", static_dir.string())) {
      throw Error(ErrorCode::io, "cannot serve static files from " + static_dir.string());
    }
  }
  s.set_error_handler([](const httplib::Request &, httplib::Response &res) {
    if (res.body.empty()) {
      send_error(res, res.status, res.status == 404 ? "not-found" : "http-error",
                 httplib::status_message(res.status));
    }
  });
  return server;
}

void serve(Store &store, const std::string &host, int port,
           const std::filesystem::path &static_dir) {
  ValidationService service(store);
  auto server = make_validation_server(service, static_dir);
  spdlog::info("serving on http://{}:{}", host, port);
  if (!server->listen(host, port)) {
    throw Error(ErrorCode::io, "cannot listen on " + host + ":" + std::to_string(port));
  }
}

} // namespace minehub
