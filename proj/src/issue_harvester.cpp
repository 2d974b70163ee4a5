#include "minehub/issue_harvester.hpp"

#include <algorithm>
#include <fstream>
#include <regex>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "minehub/error.hpp"
#include "minehub/model.hpp"
#include "minehub/text.hpp"

namespace minehub {

namespace {

const Document &at_or_null(const Document &doc, std::string_view key) {
  static const Document null_doc;
  if (!doc.is_object()) {
    return null_doc;
  }
  const auto it = doc.find(key);
  return it == doc.end() ? null_doc : *it;
}

std::string text_or(const Document &doc, std::string_view key) {
  const auto &v = at_or_null(doc, key);
  if (v.is_string()) {
    return v.get<std::string>();
  }
  if (v.is_number_integer()) {
    return std::to_string(v.get<std::int64_t>());
  }
  return {};
}

std::string required_timestamp(const Document &doc, std::string_view key, std::string_view what) {
  const auto raw = text_or(doc, key);
  const auto ts = parse_iso8601(raw);
  if (!ts) {
    throw Error(ErrorCode::malformed_payload, std::string(what) + ": missing or invalid " +
                                                  std::string(key));
  }
  return format_utc(ts->epoch_seconds);
}

std::optional<std::string> optional_timestamp(const Document &doc, std::string_view key) {
  const auto ts = parse_iso8601(text_or(doc, key));
  if (!ts) {
    return std::nullopt;
  }
  return format_utc(ts->epoch_seconds);
}

std::int64_t ordinal_of(const std::string &external_id, std::int64_t fallback) {
  if (external_id.empty() || external_id.size() > 18 ||
      !std::all_of(external_id.begin(), external_id.end(),
                   [](char c) { return c >= '0' && c <= '9'; })) {
    return fallback;
  }
  return std::stoll(external_id);
}

std::optional<MappedPerson> github_person(const Document &user) {
  if (!user.is_object()) {
    return std::nullopt;
  }
  MappedPerson p;
  p.name = text_or(user, "name");
  if (p.name.empty()) {
    p.name = text_or(user, "login");
  }
  p.email = text_or(user, "email");
  if (p.name.empty() && p.email.empty()) {
    return std::nullopt;
  }
  return p;
}

std::optional<MappedPerson> jira_person(const Document &user) {
  if (!user.is_object()) {
    return std::nullopt;
  }
  MappedPerson p;
  for (const char *key : {"displayName", "name", "key", "accountId"}) {
    p.name = text_or(user, key);
    if (!p.name.empty()) {
      break;
    }
  }
  p.email = text_or(user, "emailAddress");
  if (p.name.empty() && p.email.empty()) {
    return std::nullopt;
  }
  return p;
}

void flatten_adf(const Document &node, std::string &out) {
  if (node.is_string()) {
    out += node.get<std::string>();
    return;
  }
  if (!node.is_object()) {
    return;
  }
  const auto type = text_or(node, "type");
  if (type == "text") {
    out += text_or(node, "text");
    return;
  }
  if (type == "hardBreak") {
    out += '\n';
    return;
  }
  const auto &content = at_or_null(node, "content");
  if (content.is_array()) {
    for (const auto &child : content) {
      flatten_adf(child, out);
    }
  }
  if (type == "paragraph" || type == "heading" || type == "codeBlock" || type == "listItem" ||
      type == "blockquote") {
    if (!out.empty() && out.back() != '\n') {
      out += '\n';
    }
  }
}

// Jira descriptions are plain text (v2 API) or an ADF document (v3 API).
std::string jira_text(const Document &value) {
  if (value.is_string()) {
    return value.get<std::string>();
  }
  std::string out;
  flatten_adf(value, out);
  while (!out.empty() && out.back() == '\n') {
    out.pop_back();
  }
  return out;
}

std::vector<std::string> names_of(const Document &list) {
  std::vector<std::string> out;
  if (!list.is_array()) {
    return out;
  }
  for (const auto &v : list) {
    auto name = text_or(v, "name");
    if (!name.empty()) {
      out.push_back(std::move(name));
    }
  }
  return out;
}

void fix_updated(Document &issue) {
  if (!issue.contains("updated_at") || issue["updated_at"].get<std::string>() <
                                           issue["created_at"].get<std::string>()) {
    issue["updated_at"] = issue["created_at"];
  }
}

void sort_comments(std::vector<MappedComment> &comments) {
  std::stable_sort(comments.begin(), comments.end(), [](const auto &a, const auto &b) {
    if (a.created_at != b.created_at) {
      return a.created_at < b.created_at;
    }
    return a.ordinal < b.ordinal;
  });
}

MappedComment map_jira_comment(const Document &raw, std::int64_t index) {
  MappedComment c;
  c.external_id = text_or(raw, "id");
  if (c.external_id.empty()) {
    throw Error(ErrorCode::malformed_payload, "jira comment without id");
  }
  c.created_at = required_timestamp(raw, "created", "jira comment " + c.external_id);
  c.body = jira_text(at_or_null(raw, "body"));
  if (auto p = jira_person(at_or_null(raw, "author"))) {
    c.author = *p;
  }
  c.ordinal = ordinal_of(c.external_id, index);
  return c;
}

std::optional<MappedIssue> map_github(const Document &raw) {
  if (raw.contains("pull_request")) {
    return std::nullopt;
  }
  const auto number = text_or(raw, "number");
  if (number.empty()) {
    throw Error(ErrorCode::malformed_payload, "github issue without number");
  }
  const auto title = text_or(raw, "title");
  if (title.empty()) {
    throw Error(ErrorCode::malformed_payload, "github issue #" + number + " without title");
  }
  MappedIssue m;
  auto &issue = m.issue;
  issue["external_id"] = number;
  issue["title"] = title;
  issue["description"] = text_or(raw, "body");
  std::vector<std::string> labels = names_of(at_or_null(raw, "labels"));
  issue["issue_type"] = github_issue_type(labels);
  issue["created_at"] = required_timestamp(raw, "created_at", "github issue #" + number);
  if (auto updated = optional_timestamp(raw, "updated_at")) {
    issue["updated_at"] = *updated;
  }
  fix_updated(issue);
  const auto state = text_or(raw, "state");
  if (!state.empty()) {
    issue["status"] = state;
  }
  const auto reason = text_or(raw, "state_reason");
  if (reason == "completed") {
    issue["resolution"] = "Fixed";
  } else if (reason == "not_planned") {
    issue["resolution"] = "Won't Fix";
  }
  const auto &milestone = at_or_null(raw, "milestone");
  if (milestone.is_object() && !text_or(milestone, "title").empty()) {
    issue["fixed_versions"] = std::vector<std::string>{text_or(milestone, "title")};
  }
  const auto url = text_or(raw, "html_url");
  if (!url.empty()) {
    issue["web_url"] = url;
  }
  m.reporter = github_person(at_or_null(raw, "user"));
  m.assignee = github_person(at_or_null(raw, "assignee"));
  return m;
}

std::optional<MappedIssue> map_jira(const Document &raw) {
  const auto key = text_or(raw, "key");
  if (key.empty()) {
    throw Error(ErrorCode::malformed_payload, "jira issue without key");
  }
  const auto &fields = at_or_null(raw, "fields");
  if (!fields.is_object()) {
    throw Error(ErrorCode::malformed_payload, "jira issue " + key + " without fields");
  }
  const auto title = text_or(fields, "summary");
  if (title.empty()) {
    throw Error(ErrorCode::malformed_payload, "jira issue " + key + " without summary");
  }
  MappedIssue m;
  auto &issue = m.issue;
  issue["external_id"] = key;
  issue["title"] = title;
  issue["description"] = jira_text(at_or_null(fields, "description"));
  auto type = text_or(at_or_null(fields, "issuetype"), "name");
  issue["issue_type"] = type.empty() ? std::string("other") : type;
  issue["created_at"] = required_timestamp(fields, "created", "jira issue " + key);
  if (auto updated = optional_timestamp(fields, "updated")) {
    issue["updated_at"] = *updated;
  }
  fix_updated(issue);
  for (const auto &[field, target] : {std::pair{"priority", "priority"},
                                      std::pair{"status", "status"},
                                      std::pair{"resolution", "resolution"}}) {
    const auto name = text_or(at_or_null(fields, field), "name");
    if (!name.empty()) {
      issue[target] = name;
    }
  }
  if (fields.contains("versions")) {
    issue["affected_versions"] = names_of(fields["versions"]);
  }
  if (fields.contains("fixVersions")) {
    issue["fixed_versions"] = names_of(fields["fixVersions"]);
  }
  const auto self = text_or(raw, "self");
  if (const auto pos = self.find("/rest/api/"); pos != std::string::npos) {
    issue["web_url"] = self.substr(0, pos) + "/browse/" + key;
  }
  m.reporter = jira_person(at_or_null(fields, "reporter"));
  m.assignee = jira_person(at_or_null(fields, "assignee"));
  const auto &comments = at_or_null(at_or_null(fields, "comment"), "comments");
  if (comments.is_array()) {
    std::int64_t index = 0;
    for (const auto &c : comments) {
      m.comments.push_back(map_jira_comment(c, index++));
    }
  }
  sort_comments(m.comments);
  return m;
}

std::string person_ref(Store &store, const MappedPerson &p) {
  return upsert_person(store, p.name, p.email);
}

std::string ensure_issue_system(Store &store, std::string_view project, std::string_view url,
                                TrackerType tracker, std::string_view source) {
  const auto project_id = ensure_project(store, project);
  Document sys{{"project_id", project_id},
               {"url", std::string(url)},
               {"tracker_type", std::string(to_string(tracker))}};
  const auto id = make_id(col::issue_system, sys);
  if (auto existing = store.get(col::issue_system, id)) {
    for (const char *keep : {"watermark"}) {
      if (existing->contains(keep)) {
        sys[keep] = (*existing)[keep];
      }
    }
  }
  if (!source.empty()) {
    sys["source"] = std::string(source);
  }
  return store.upsert(col::issue_system, std::move(sys));
}

void advance_watermark(Store &store, const std::string &system_id, const std::string &ts) {
  if (ts.empty()) {
    return;
  }
  store.modify(col::issue_system, system_id, [&](Document &doc) {
    if (doc.contains("watermark") && doc["watermark"].get<std::string>() >= ts) {
      return false;
    }
    doc["watermark"] = ts;
    return true;
  });
}

void record_error(IssueHarvestSummary &summary, std::string message) {
  spdlog::warn("issue harvest: {}", message);
  summary.errors.push_back(std::move(message));
}

// ---- live access ----------------------------------------------------------

class HttplibTransport final : public HttpTransport {
public:
  HttpResponse get(const std::string &url,
                   const std::map<std::string, std::string> &headers) override {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
      throw Error(ErrorCode::invalid_argument, "not an http(s) url: " + url);
    }
    const auto path_start = url.find('/', scheme_end + 3);
    const auto origin = url.substr(0, path_start);
    const auto path = path_start == std::string::npos ? std::string("/") : url.substr(path_start);
    httplib::Client client(origin);
    client.set_follow_location(true);
    client.set_connection_timeout(std::chrono::seconds(30));
    client.set_read_timeout(std::chrono::seconds(120));
    httplib::Headers hs;
    for (const auto &[k, v] : headers) {
      hs.emplace(k, v);
    }
    auto res = client.Get(path, hs);
    if (!res) {
      throw Error(ErrorCode::io, "request to " + origin + " failed: " + httplib::to_string(res.error()));
    }
    HttpResponse out;
    out.status = res->status;
    out.body = std::move(res->body);
    for (const auto &[k, v] : res->headers) {
      out.headers[to_lower_ascii(k)] = v;
    }
    return out;
  }
};

std::string percent_encode(std::string_view s) {
  static const char *hex = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : s) {
    if (std::isalnum(c) != 0 || c == '-' || c == '_' || c == '.' || c == '~') {
      out.push_back(static_cast<char>(c));
    } else {
      out.push_back('%');
      out.push_back(hex[c >> 4]);
      out.push_back(hex[c & 15]);
    }
  }
  return out;
}

std::string header_or(const HttpResponse &r, const std::string &name) {
  const auto it = r.headers.find(name);
  return it == r.headers.end() ? std::string() : it->second;
}

class LiveClient {
public:
  LiveClient(const LiveSourceOptions &options, std::map<std::string, std::string> headers)
      : options_(options), headers_(std::move(headers)) {
    if (options_.transport == nullptr) {
      owned_ = make_http_transport();
      transport_ = owned_.get();
    } else {
      transport_ = options_.transport;
    }
  }

  // Resumable position for error messages.
  std::string resume_hint;

  HttpResponse fetch(const std::string &url) {
    int waits = 0;
    while (true) {
      auto res = transport_->get(url, headers_);
      const auto remaining = header_or(res, "x-ratelimit-remaining");
      const bool limited =
          res.status == 429 || (res.status == 403 && (remaining == "0" ||
                                                      !header_or(res, "retry-after").empty()));
      if (res.status == 401 || (res.status == 403 && !limited)) {
        throw Error(ErrorCode::authentication,
                    "tracker rejected credentials (HTTP " + std::to_string(res.status) + ")");
      }
      if (limited) {
        if (waits >= options_.max_rate_limit_waits) {
          throw Error(ErrorCode::rate_limited,
                      "rate limit exhausted; resume from watermark " +
                          (resume_hint.empty() ? std::string("<none>") : resume_hint));
        }
        sleep(wait_for(res, waits));
        ++waits;
        continue;
      }
      if (res.status < 200 || res.status >= 300) {
        throw Error(ErrorCode::io,
                    "tracker returned HTTP " + std::to_string(res.status) + " for " + url);
      }
      if (remaining == "0") {
        sleep(wait_for(res, waits));
      }
      return res;
    }
  }

  Document fetch_json(const std::string &url) {
    auto res = fetch(url);
    auto doc = Document::parse(res.body, nullptr, false);
    if (doc.is_discarded()) {
      throw Error(ErrorCode::malformed_payload, "response from " + url + " is not JSON");
    }
    return doc;
  }

private:
  std::chrono::seconds wait_for(const HttpResponse &res, int attempt) const {
    const auto retry_after = header_or(res, "retry-after");
    if (!retry_after.empty() && std::all_of(retry_after.begin(), retry_after.end(), ::isdigit)) {
      return std::chrono::seconds(std::stoll(retry_after));
    }
    const auto reset = header_or(res, "x-ratelimit-reset");
    if (!reset.empty() && std::all_of(reset.begin(), reset.end(), ::isdigit)) {
      const auto delta = std::stoll(reset) - now_epoch_seconds();
      return std::chrono::seconds(std::max<std::int64_t>(delta, 0) + 1);
    }
    return options_.backoff_base * (1LL << std::min(attempt, 10));
  }

  void sleep(std::chrono::seconds d) const {
    spdlog::info("rate limited; sleeping {}s", d.count());
    if (options_.sleeper) {
      options_.sleeper(d);
    } else {
      std::this_thread::sleep_for(d);
    }
  }

  const LiveSourceOptions &options_;
  std::map<std::string, std::string> headers_;
  std::unique_ptr<HttpTransport> owned_;
  HttpTransport *transport_ = nullptr;
};

std::string github_api_base(const std::string &url) {
  std::string u = url;
  while (!u.empty() && u.back() == '/') {
    u.pop_back();
  }
  if (u.ends_with(".git")) {
    u.resize(u.size() - 4);
  }
  if (u.find("/repos/") != std::string::npos) {
    return u;
  }
  static const std::regex web(R"(^https?://github\.com/([^/]+)/([^/]+)$)");
  std::smatch m;
  if (std::regex_match(u, m, web)) {
    return "https://api.github.com/repos/" + m[1].str() + "/" + m[2].str();
  }
  throw Error(ErrorCode::invalid_argument, "cannot derive GitHub API URL from " + url);
}

struct JiraTarget {
  std::string base;
  std::string project_key;
};

JiraTarget jira_target(const std::string &url) {
  static const std::regex re(R"(^(https?://.+?)/(?:browse|projects)/([A-Z][A-Z0-9_]*)/?.*$)");
  std::smatch m;
  if (!std::regex_match(url, m, re)) {
    throw Error(ErrorCode::invalid_argument,
                "jira url must look like <base>/browse/<KEY>: " + url);
  }
  return {m[1].str(), m[2].str()};
}

void harvest_github_live(Store &store, LiveClient &client, const LiveSourceOptions &options,
                         const std::string &system_id, const std::string &since,
                         IssueHarvestSummary &summary) {
  const auto api = github_api_base(options.url);
  std::string url = api + "/issues?state=all&sort=updated&direction=asc&per_page=" +
                    std::to_string(options.page_size);
  if (!since.empty()) {
    url += "&since=" + percent_encode(since);
  }
  std::optional<std::string> next = url;
  while (next) {
    auto res = client.fetch(*next);
    auto page = Document::parse(res.body, nullptr, false);
    if (!page.is_array()) {
      throw Error(ErrorCode::malformed_payload, "GitHub issue page is not a list");
    }
    std::string page_max;
    for (const auto &raw : page) {
      try {
        auto mapped = map_issue(raw, TrackerType::github);
        if (!mapped) {
          ++summary.skipped;
          continue;
        }
        if (at_or_null(raw, "comments").is_number_integer() && raw["comments"].get<int>() > 0) {
          std::optional<std::string> cnext = text_or(raw, "comments_url") + "?per_page=" +
                                             std::to_string(options.page_size);
          std::int64_t index = 0;
          while (cnext) {
            auto cres = client.fetch(*cnext);
            auto cpage = Document::parse(cres.body, nullptr, false);
            if (cpage.is_array()) {
              for (const auto &c : cpage) {
                auto mc = map_github_comment(c);
                if (mc.ordinal == 0) {
                  mc.ordinal = index;
                }
                ++index;
                mapped->comments.push_back(std::move(mc));
              }
            }
            cnext = next_link(header_or(cres, "link"));
          }
          sort_comments(mapped->comments);
        }
        store_mapped_issue(store, system_id, *mapped, summary);
        page_max = std::max(page_max, mapped->issue["updated_at"].get<std::string>());
      } catch (const Error &e) {
        if (e.code() != ErrorCode::malformed_payload) {
          throw;
        }
        record_error(summary, e.what());
      }
    }
    advance_watermark(store, system_id, page_max);
    client.resume_hint = page_max.empty() ? client.resume_hint : page_max;
    next = next_link(header_or(res, "link"));
  }
}

void harvest_jira_live(Store &store, LiveClient &client, const LiveSourceOptions &options,
                       const std::string &system_id, const std::string &since,
                       IssueHarvestSummary &summary) {
  const auto target = jira_target(options.url);
  std::string jql = "project = \"" + target.project_key + "\"";
  if (!since.empty()) {
    // Jira JQL has minute resolution; the boundary is re-fetched and upserted idempotently.
    const auto ts = since.substr(0, 10) + " " + since.substr(11, 5);
    std::string jira_ts = ts;
    std::replace(jira_ts.begin(), jira_ts.end(), '-', '/');
    jql += " AND updated >= \"" + jira_ts + "\"";
  }
  jql += " ORDER BY updated ASC";
  std::int64_t start = 0;
  while (true) {
    const auto url = target.base + "/rest/api/2/search?jql=" + percent_encode(jql) +
                     "&startAt=" + std::to_string(start) +
                     "&maxResults=" + std::to_string(options.page_size) + "&fields=*all";
    auto page = client.fetch_json(url);
    const auto &issues = at_or_null(page, "issues");
    if (!issues.is_array()) {
      throw Error(ErrorCode::malformed_payload, "Jira search response without issues");
    }
    std::string page_max;
    for (auto raw : issues) {
      try {
        const auto &comment = at_or_null(at_or_null(raw, "fields"), "comment");
        const auto total = at_or_null(comment, "total");
        const auto &listed = at_or_null(comment, "comments");
        if (total.is_number_integer() && listed.is_array() &&
            total.get<std::size_t>() > listed.size()) {
          Document all = Document::array();
          std::int64_t cstart = 0;
          while (true) {
            auto cpage = client.fetch_json(target.base + "/rest/api/2/issue/" +
                                           text_or(raw, "key") +
                                           "/comment?startAt=" + std::to_string(cstart));
            const auto &cs = at_or_null(cpage, "comments");
            if (!cs.is_array() || cs.empty()) {
              break;
            }
            for (const auto &c : cs) {
              all.push_back(c);
            }
            cstart += static_cast<std::int64_t>(cs.size());
            if (cstart >= at_or_null(cpage, "total").get<std::int64_t>()) {
              break;
            }
          }
          raw["fields"]["comment"]["comments"] = std::move(all);
        }
        auto mapped = map_issue(raw, TrackerType::jira);
        store_mapped_issue(store, system_id, *mapped, summary);
        page_max = std::max(page_max, mapped->issue["updated_at"].get<std::string>());
      } catch (const Error &e) {
        if (e.code() != ErrorCode::malformed_payload) {
          throw;
        }
        record_error(summary, e.what());
      }
    }
    advance_watermark(store, system_id, page_max);
    client.resume_hint = page_max.empty() ? client.resume_hint : page_max;
    start += static_cast<std::int64_t>(issues.size());
    const auto &total = at_or_null(page, "total");
    if (issues.empty() || !total.is_number_integer() || start >= total.get<std::int64_t>()) {
      break;
    }
  }
}

} // namespace

std::string_view to_string(TrackerType t) {
  return t == TrackerType::jira ? "jira" : "github";
}

TrackerType parse_tracker_type(std::string_view s) {
  if (s == "jira") {
    return TrackerType::jira;
  }
  if (s == "github") {
    return TrackerType::github;
  }
  throw Error(ErrorCode::invalid_argument, "unknown tracker type: " + std::string(s));
}

std::string github_issue_type(const std::vector<std::string> &labels) {
  static const std::pair<const char *, const char *> table[] = {
      {"bug", "bug"}, {"enhancement", "improvement"}, {"question", "question"}};
  for (const auto &[label, type] : table) {
    for (const auto &l : labels) {
      if (to_lower_ascii(trim(l)) == label) {
        return type;
      }
    }
  }
  return "other";
}

std::optional<MappedIssue> map_issue(const Document &raw, TrackerType tracker) {
  if (!raw.is_object()) {
    throw Error(ErrorCode::malformed_payload, "issue payload is not an object");
  }
  return tracker == TrackerType::github ? map_github(raw) : map_jira(raw);
}

MappedComment map_github_comment(const Document &raw) {
  MappedComment c;
  c.external_id = text_or(raw, "id");
  if (c.external_id.empty()) {
    throw Error(ErrorCode::malformed_payload, "github comment without id");
  }
  c.created_at = required_timestamp(raw, "created_at", "github comment " + c.external_id);
  c.body = text_or(raw, "body");
  if (auto p = github_person(at_or_null(raw, "user"))) {
    c.author = *p;
  }
  c.ordinal = ordinal_of(c.external_id, 0);
  return c;
}

std::optional<std::string> github_comment_issue(const Document &raw) {
  const auto url = text_or(raw, "issue_url");
  const auto slash = url.rfind('/');
  if (url.empty() || slash == std::string::npos || slash + 1 == url.size()) {
    return std::nullopt;
  }
  return url.substr(slash + 1);
}

std::optional<std::string> next_link(std::string_view link_header) {
  for (const auto &part : split(link_header, ',')) {
    const auto open = part.find('<');
    const auto close = part.find('>');
    if (open == std::string::npos || close == std::string::npos || close < open) {
      continue;
    }
    if (part.find("rel=\"next\"", close) != std::string::npos) {
      return part.substr(open + 1, close - open - 1);
    }
  }
  return std::nullopt;
}

std::unique_ptr<HttpTransport> make_http_transport() {
  return std::make_unique<HttplibTransport>();
}

void store_mapped_issue(Store &store, std::string_view issue_system_id, const MappedIssue &mapped,
                        IssueHarvestSummary &summary) {
  Document issue = mapped.issue;
  issue["issue_system_id"] = std::string(issue_system_id);
  if (mapped.reporter) {
    issue["reporter_person_id"] = person_ref(store, *mapped.reporter);
  }
  if (mapped.assignee) {
    issue["assignee_person_id"] = person_ref(store, *mapped.assignee);
  }
  const auto issue_id = store.upsert(col::issue, std::move(issue));
  ++summary.issues_stored;
  for (const auto &c : mapped.comments) {
    store.upsert(col::issue_comment, {{"issue_id", issue_id},
                                      {"external_id", c.external_id},
                                      {"author_person_id", person_ref(store, c.author)},
                                      {"created_at", c.created_at},
                                      {"body", c.body},
                                      {"ordinal", c.ordinal}});
    ++summary.comments_stored;
  }
}

IssueHarvestSummary harvest_issues_fixture(Store &store, const std::filesystem::path &fixture,
                                           TrackerType tracker, std::string_view project,
                                           std::string system_url) {
  std::ifstream in(fixture, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::io, "cannot read fixture " + fixture.string());
  }
  if (system_url.empty()) {
    system_url = "file://" + std::filesystem::weakly_canonical(fixture).string();
  }
  const auto system_id =
      ensure_issue_system(store, project, system_url, tracker, fixture.string());

  IssueHarvestSummary summary;
  std::vector<MappedIssue> issues;
  std::map<std::string, std::vector<MappedComment>> loose_comments;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank(line)) {
      continue;
    }
    const auto where = fixture.filename().string() + ":" + std::to_string(line_no);
    auto raw = Document::parse(sanitize_utf8(line).text, nullptr, false);
    if (raw.is_discarded()) {
      record_error(summary, where + ": not a JSON document");
      continue;
    }
    try {
      if (tracker == TrackerType::github && raw.is_object() && !raw.contains("number") &&
          raw.contains("issue_url")) {
        auto number = github_comment_issue(raw);
        if (!number) {
          throw Error(ErrorCode::malformed_payload, "comment without issue_url");
        }
        auto c = map_github_comment(raw);
        auto &bucket = loose_comments[*number];
        if (c.ordinal == 0) {
          c.ordinal = static_cast<std::int64_t>(bucket.size());
        }
        bucket.push_back(std::move(c));
        continue;
      }
      auto mapped = map_issue(raw, tracker);
      if (!mapped) {
        ++summary.skipped;
        continue;
      }
      issues.push_back(std::move(*mapped));
    } catch (const Error &e) {
      if (e.code() != ErrorCode::malformed_payload) {
        throw;
      }
      record_error(summary, where + ": " + e.what());
    }
  }

  std::string max_updated;
  for (auto &mapped : issues) {
    const auto ext = mapped.issue["external_id"].get<std::string>();
    if (auto it = loose_comments.find(ext); it != loose_comments.end()) {
      for (auto &c : it->second) {
        mapped.comments.push_back(std::move(c));
      }
      loose_comments.erase(it);
      sort_comments(mapped.comments);
    }
    store_mapped_issue(store, system_id, mapped, summary);
    max_updated = std::max(max_updated, mapped.issue["updated_at"].get<std::string>());
  }
  // Comments whose issue was ingested earlier (e.g. an earlier fixture half).
  for (auto &[ext, comments] : loose_comments) {
    const auto issue_id = make_id(
        col::issue, {{"issue_system_id", system_id}, {"external_id", ext}});
    if (!store.get(col::issue, issue_id)) {
      record_error(summary, "comments for unknown issue " + ext);
      continue;
    }
    for (const auto &c : comments) {
      store.upsert(col::issue_comment, {{"issue_id", issue_id},
                                        {"external_id", c.external_id},
                                        {"author_person_id", person_ref(store, c.author)},
                                        {"created_at", c.created_at},
                                        {"body", c.body},
                                        {"ordinal", c.ordinal}});
      ++summary.comments_stored;
    }
  }
  advance_watermark(store, system_id, max_updated);
  return summary;
}

IssueHarvestSummary harvest_issues_live(Store &store, const LiveSourceOptions &options,
                                        TrackerType tracker, std::string_view project) {
  const auto system_id = ensure_issue_system(store, project, options.url, tracker, options.url);
  const auto sys = store.get(col::issue_system, system_id);
  const auto since = str_or(*sys, "watermark");

  std::map<std::string, std::string> headers{{"User-Agent", "minehub"}};
  if (tracker == TrackerType::github) {
    headers["Accept"] = "application/vnd.github+json";
  } else {
    headers["Accept"] = "application/json";
  }
  if (!options.token.empty()) {
    if (tracker == TrackerType::jira && options.token.find(':') != std::string::npos) {
      headers["Authorization"] = "Basic " + httplib::detail::base64_encode(options.token);
    } else {
      headers["Authorization"] = "Bearer " + options.token;
    }
  }
  LiveClient client(options, std::move(headers));
  client.resume_hint = since;
  IssueHarvestSummary summary;
  if (tracker == TrackerType::github) {
    harvest_github_live(store, client, options, system_id, since, summary);
  } else {
    harvest_jira_live(store, client, options, system_id, since, summary);
  }
  return summary;
}

} // namespace minehub
