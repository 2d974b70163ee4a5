#include "minehub/metrics.hpp"

#include <mutex>
#include <regex>
#include <unordered_map>

#include "minehub/error.hpp"
#include "minehub/model.hpp"
#include "minehub/text.hpp"

namespace minehub {

namespace {

std::string strip_spaces(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) {
      out.push_back(c);
    }
  }
  return out;
}

std::vector<std::string> java_imports(std::string_view content) {
  static const std::regex pattern(
      R"(^\s*import\s+(?:static\s+)?([A-Za-z_$][\w$]*(?:\s*\.\s*(?:[A-Za-z_$][\w$]*|\*))*)\s*;)");
  std::vector<std::string> out;
  const auto scanned = scan_lines(content, Language::java);
  const auto lines = split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (scanned[i].kind != LineClass::code) {
      continue;
    }
    const std::string line(lines[i]);
    std::smatch m;
    if (std::regex_search(line, m, pattern)) {
      out.push_back(strip_spaces(m[1].str()));
    }
  }
  return out;
}

// Code portion of a python line: drops a trailing '#' comment outside strings.
std::string python_code_part(std::string_view line) {
  std::string out;
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quote != 0) {
      out.push_back(c);
      if (c == '\\' && i + 1 < line.size()) {
        out.push_back(line[++i]);
      } else if (c == quote) {
        quote = 0;
      }
    } else if (c == '#') {
      break;
    } else {
      if (c == '"' || c == '\'') {
        quote = c;
      }
      out.push_back(c);
    }
  }
  return out;
}

void python_statement_imports(std::string_view stmt, std::vector<std::string> &out) {
  static const std::regex import_re(R"(^\s*import\s+(.+)$)");
  static const std::regex from_re(R"(^\s*from\s+(\.*[\w.]*)\s+import\s+(.+)$)");
  const std::string s(trim(stmt));
  std::smatch m;
  if (std::regex_match(s, m, from_re)) {
    const std::string module = m[1].str();
    std::string names = m[2].str();
    std::erase_if(names, [](char c) { return c == '(' || c == ')' || c == '\\'; });
    for (const auto &part : split(names, ',')) {
      const auto tokens = split(std::string(trim(part)), ' ');
      const std::string name(trim(tokens.front()));
      if (name.empty()) {
        continue;
      }
      const bool dots_only = !module.empty() && module.find_first_not_of('.') == std::string::npos;
      out.push_back(dots_only ? module + name : module + "." + name);
    }
  } else if (std::regex_match(s, m, import_re)) {
    std::string names = m[1].str();
    std::erase_if(names, [](char c) { return c == '\\'; });
    for (const auto &part : split(names, ',')) {
      std::string trimmed(trim(part));
      const auto sp = trimmed.find_first_of(" \t");
      const std::string name = strip_spaces(trimmed.substr(0, sp));
      if (!name.empty()) {
        out.push_back(name);
      }
    }
  }
}

std::vector<std::string> python_imports(std::string_view content) {
  std::vector<std::string> out;
  const auto scanned = scan_lines(content, Language::python);
  const auto lines = split_lines(content);
  std::string logical;
  int depth = 0;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (scanned[i].kind != LineClass::code) {
      continue;
    }
    const std::string code = python_code_part(lines[i]);
    for (char c : code) {
      depth += (c == '(') - (c == ')');
    }
    logical += code;
    const auto t = trim(code);
    if (depth > 0 || (!t.empty() && t.back() == '\\')) {
      logical.push_back(' ');
      continue;
    }
    for (const auto &stmt : split(logical, ';')) {
      python_statement_imports(stmt, out);
    }
    logical.clear();
    depth = 0;
  }
  return out;
}

// Metrics depend only on blob content and language, so measured blobs are
// shared across commits.
class MeasureCache {
public:
  std::optional<Document> find(const std::string &key) {
    std::lock_guard lock(mutex_);
    const auto it = entries_.find(key);
    if (it == entries_.end()) {
      return std::nullopt;
    }
    return it->second;
  }
  void put(const std::string &key, const Document &value) {
    std::lock_guard lock(mutex_);
    if (entries_.size() > 200000) {
      entries_.clear();
    }
    entries_[key] = value;
  }

private:
  std::mutex mutex_;
  std::unordered_map<std::string, Document> entries_;
};

MeasureCache &cache() {
  static MeasureCache c;
  return c;
}

} // namespace

std::vector<std::string> extract_imports(std::string_view content, Language language) {
  switch (language) {
  case Language::java: return java_imports(content);
  case Language::python: return python_imports(content);
  case Language::unknown: break;
  }
  return {};
}

Document measure_file(std::string_view path, std::string_view content) {
  const Language lang = language_for_path(path);
  const auto counts = count_lines(content, lang);
  Document metrics = {{"total_lines", counts.total_lines}};
  if (lang != Language::unknown) {
    metrics["lloc"] = counts.lloc;
    metrics["cloc"] = counts.cloc;
    metrics["blank"] = counts.blank;
  }
  return {{"metrics", metrics}, {"imports", extract_imports(content, lang)}};
}

std::vector<TreeEntry> eligible_tree_entries(const GitRepo &repo, std::string_view rev) {
  std::vector<TreeEntry> out;
  for (auto &entry : repo.list_tree(rev)) {
    if (entry.type != "blob") {
      continue;
    }
    const std::string key = "binary:" + entry.object;
    bool binary = false;
    if (const auto hit = cache().find(key)) {
      binary = hit->get<bool>();
    } else {
      const auto content = repo.read_object(entry.object);
      binary = !content || looks_binary(*content);
      cache().put(key, binary);
    }
    if (!binary) {
      out.push_back(std::move(entry));
    }
  }
  return out;
}

MetricsSummary compute_metrics(Store &store, const GitRepo &repo, const Document &commit) {
  const std::string commit_id = commit["id"];
  const std::string vcs_id = commit["vcs_system_id"];
  const std::string hash = commit["revision_hash"];
  MetricsSummary summary;
  for (const auto &entry : eligible_tree_entries(repo, hash)) {
    const std::string key = std::to_string(static_cast<int>(language_for_path(entry.path))) + ":" +
                            entry.object;
    Document measured;
    if (auto hit = cache().find(key)) {
      measured = std::move(*hit);
    } else {
      const auto content = repo.read_object(entry.object);
      if (!content) {
        continue;
      }
      measured = measure_file(entry.path, *content);
      cache().put(key, measured);
    }
    const auto file_id = store.upsert(col::file, {{"vcs_system_id", vcs_id}, {"path", entry.path}});
    store.upsert(col::metric_record, {{"commit_id", commit_id},
                                      {"file_id", file_id},
                                      {"metrics", measured["metrics"]},
                                      {"imports", measured["imports"]}});
    ++summary.files_measured;
  }
  return summary;
}

MetricsSummary compute_metrics(Store &store, std::string_view commit_id) {
  const auto commit = store.get(col::commit, commit_id);
  if (!commit) {
    throw Error(ErrorCode::not_found, "unknown commit " + std::string(commit_id));
  }
  const auto vcs = store.get(col::vcs_system, (*commit)["vcs_system_id"].get<std::string>());
  if (!vcs) {
    throw Error(ErrorCode::not_found, "commit without vcs system");
  }
  return compute_metrics(store, GitRepo(clone_path_of(*vcs)), *commit);
}

} // namespace minehub
