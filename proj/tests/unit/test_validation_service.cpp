#include <doctest.h>

#include <set>

#include "minehub/error.hpp"
#include "minehub/linker.hpp"
#include "minehub/model.hpp"
#include "minehub/validation_service.hpp"

#include "../support/fixture.hpp"
#include "../support/http_server.hpp"

using namespace minehub;
using namespace minehub::testing;
using nlohmann::json;

namespace {

const json issues = json::array(
    {jira_issue("PROJ-1", "Bug", "2020-01-20T10:00:00.000+0000", "2020-02-02T10:00:00.000+0000")});

json body_of(const httplib::Result &r) {
  REQUIRE(r);
  return json::parse(r->body);
}

json post(httplib::Client &c, const std::string &path, const json &body, int expected = 200) {
  const auto r = c.Post(path, body.dump(), "application/json");
  REQUIRE(r);
  CHECK(r->status == expected);
  return json::parse(r->body);
}

struct Prepared {
  InducingFixture f;
  std::string link_id, issue_id, hunk_id;
  int hunk_line = 0;
};

Prepared prepare(Store &store, ScriptedRepo &repo, const TempDir &dir) {
  Prepared p;
  p.f = build_inducing(repo);
  ingest(store, repo.dir(), {issues.begin(), issues.end()}, dir.path());
  link_commits_to_issues(store, "p");
  const auto link = store.query(col::commit_issue_link).front();
  p.link_id = link["id"];
  p.issue_id = link["issue_id"];
  const auto action = store.find_one(col::file_action, Query{}.eq("commit_id", link["commit_id"])).value();
  const auto hunk = store.find_one(col::hunk, Query{}.eq("file_action_id", action["id"])).value();
  p.hunk_id = hunk["id"];
  p.hunk_line = hunk["new_start"];
  return p;
}

} // namespace

TEST_SUITE("validation-service") {

TEST_CASE("read endpoints") {
  TempDir dir("api-read");
  ScriptedRepo repo(dir / "repo");
  Store store(dir / "data");
  const auto p = prepare(store, repo, dir);
  ValidationService service(store);
  RunningServer server(service);
  auto c = server.client();

  CHECK(body_of(c.Get("/api/projects")) == json::array({{{"id", require_project(store, "p")}, {"name", "p"}}}));
  const auto stats = body_of(c.Get("/api/projects/p/stats"));
  CHECK(stats["commits"] == 3);
  CHECK(stats["issues"] == 1);
  CHECK(stats["links"] == 1);
  CHECK(stats["validated_links"] == 0);

  const auto graph = body_of(c.Get("/api/projects/p/commit-graph?filter=all"));
  CHECK(graph["nodes"].size() == 3);
  CHECK(graph["edges"].size() == 2);
  std::set<json> edges(graph["edges"].begin(), graph["edges"].end());
  CHECK(edges == std::set<json>{json{{"parent", p.f.c1}, {"child", p.f.c2}}, json{{"parent", p.f.c2}, {"child", p.f.c3}}});
  const auto msg = body_of(c.Get("/api/projects/p/commit-graph?filter=message&q=proj-1"));
  REQUIRE(msg["nodes"].size() == 1);
  CHECK(msg["nodes"][0]["hash"] == p.f.c3);
  CHECK(msg["edges"].empty());
  CHECK(c.Get("/api/projects/p/commit-graph?filter=message")->status == 400);
  CHECK(c.Get("/api/projects/p/commit-graph?filter=odd")->status == 400);

  const auto links = body_of(c.Get("/api/links?project=p&status=unvalidated"));
  REQUIRE(links.size() == 1);
  CHECK(links[0]["issue_external_id"] == "PROJ-1");
  CHECK(body_of(c.Get("/api/links?project=p&status=valid")).empty());

  const auto issue = body_of(c.Get("/api/issues/" + p.issue_id));
  CHECK(issue["external_id"] == "PROJ-1");
  CHECK(issue["commits"].size() == 1);

  const auto commit = body_of(c.Get("/api/commits/" + p.f.c3));
  CHECK(commit["revision_hash"] == p.f.c3);
  CHECK(commit["file_actions"].size() == 1);
  const auto hunks = body_of(c.Get("/api/commits/" + p.f.c3 + "/hunks"));
  REQUIRE(hunks.size() == 1);
  CHECK(hunks[0]["path"] == "src/Calc.java");

  const auto missing = c.Get("/api/projects/nope/stats");
  CHECK(missing->status == 404);
  CHECK(json::parse(missing->body)["code"] == "not-found");
  CHECK(c.Get("/api/commits/" + std::string(40, '0'))->status == 404);
  CHECK(c.Get("/api/links")->status == 400);
}

TEST_CASE("writes append validation records and update protected fields") {
  TempDir dir("api-write");
  ScriptedRepo repo(dir / "repo");
  Store store(dir / "data");
  const auto p = prepare(store, repo, dir);
  ValidationService service(store);
  RunningServer server(service);
  auto c = server.client();

  const auto link = post(c, "/api/links/" + p.link_id + "/verdict", {{"value", "invalid"}, {"validator", "rev"}});
  CHECK(link["verdict"] == "invalid");
  CHECK(link["validator"] == "rev");
  const auto issue = post(c, "/api/issues/" + p.issue_id + "/type", {{"validated_type", "improvement"}, {"validator", "rev"}});
  CHECK(issue["issue_type_validated"] == "improvement");
  CHECK(issue["issue_type"] == "Bug");
  const auto hunk = post(c, "/api/hunks/" + p.hunk_id + "/lines",
                         {{"line_no", p.hunk_line}, {"label", "bugfix"}, {"validator", "rev"}});
  CHECK(hunk["line_labels"][std::to_string(p.hunk_line)] == "bugfix");

  const auto records = store.query(col::validation_record, Query{}.order_by("seq"));
  REQUIRE(records.size() == 3);
  CHECK(records[0]["seq"] == 1);
  CHECK(records[2]["seq"] == 3);
  CHECK(records[2]["line_no"] == p.hunk_line);
  CHECK(body_of(c.Get("/api/projects/p/stats"))["validated_links"] == 1);

  CHECK(post(c, "/api/links/" + p.link_id + "/verdict", {{"value", "maybe"}, {"validator", "rev"}}, 400)["code"] ==
        "invalid-argument");
  CHECK(post(c, "/api/links/" + p.link_id + "/verdict", {{"value", "valid"}, {"validator", " "}}, 400)["code"] ==
        "invalid-argument");
  CHECK(post(c, "/api/issues/" + p.issue_id + "/type", {{"validated_type", "epic"}, {"validator", "rev"}}, 400)["code"] ==
        "taxonomy");
  CHECK(post(c, "/api/hunks/" + p.hunk_id + "/lines", {{"line_no", 999}, {"label", "bugfix"}, {"validator", "rev"}},
             400)["code"] == "out-of-range");
  CHECK(post(c, "/api/links/nope/verdict", {{"value", "valid"}, {"validator", "rev"}}, 404)["code"] == "not-found");
  const auto bad = c.Post("/api/links/" + p.link_id + "/verdict", "{", "application/json");
  CHECK(bad->status == 400);
  CHECK(store.count(col::validation_record) == 3);
}

TEST_CASE("validations survive re-harvest and replay onto a fresh harvest") {
  TempDir dir("api-durable");
  ScriptedRepo repo(dir / "repo");
  Prepared p;
  json expected_link, expected_issue, expected_hunk;
  {
    Store store(dir / "data");
    p = prepare(store, repo, dir);
    ValidationService service(store);
    RunningServer server(service);
    auto c = server.client();
    expected_link = post(c, "/api/links/" + p.link_id + "/verdict", {{"value", "invalid"}, {"validator", "rev"}});
    expected_issue = post(c, "/api/issues/" + p.issue_id + "/type", {{"validated_type", "task"}, {"validator", "rev"}});
    expected_hunk = post(c, "/api/hunks/" + p.hunk_id + "/lines",
                         {{"line_no", p.hunk_line}, {"label", "refactoring"}, {"validator", "rev"}});

    ingest(store, repo.dir(), {issues.begin(), issues.end()}, dir.path());
    link_commits_to_issues(store, "p");
    CHECK(store.get(col::commit_issue_link, p.link_id).value() == expected_link);
    CHECK(store.get(col::issue, p.issue_id).value() == expected_issue);
    CHECK(store.get(col::hunk, p.hunk_id).value() == expected_hunk);
  }

  std::filesystem::create_directories(dir / "fresh");
  std::filesystem::copy_file(dir / "data" / "validation_record.ndjson", dir / "fresh" / "validation_record.ndjson");
  Store fresh(dir / "fresh");
  ingest(fresh, repo.dir(), {issues.begin(), issues.end()}, dir.path());
  link_commits_to_issues(fresh, "p");
  CHECK(fresh.get(col::commit_issue_link, p.link_id).value()["verdict"] == "unvalidated");
  const auto summary = replay_validation_log(fresh);
  CHECK(summary.applied == 3);
  CHECK(summary.skipped == 0);
  CHECK(fresh.get(col::commit_issue_link, p.link_id).value() == expected_link);
  CHECK(fresh.get(col::issue, p.issue_id).value() == expected_issue);
  CHECK(fresh.get(col::hunk, p.hunk_id).value() == expected_hunk);
}

TEST_CASE("replay applies records in sequence order") {
  TempDir dir("api-order");
  ScriptedRepo repo(dir / "repo");
  Store store(dir / "data");
  const auto p = prepare(store, repo, dir);
  ValidationService service(store);
  service.set_link_verdict(p.link_id, "invalid", "a");
  service.set_link_verdict(p.link_id, "valid", "b");
  auto link = store.get(col::commit_issue_link, p.link_id).value();
  link["verdict"] = "invalid";
  store.upsert(col::commit_issue_link, link, {.validation_write = true});
  replay_validation_log(store);
  const auto after = store.get(col::commit_issue_link, p.link_id).value();
  CHECK(after["verdict"] == "valid");
  CHECK(after["validator"] == "b");
}

TEST_CASE("custom taxonomy") {
  Store store(std::make_unique<MemoryEngine>());
  ValidationService service(store, {"defect", "other"});
  try {
    service.set_issue_type("x", "bug", "rev");
    FAIL("expected taxonomy error");
  } catch (const Error &e) {
    CHECK(e.code() == ErrorCode::taxonomy);
  }
}

} // TEST_SUITE
