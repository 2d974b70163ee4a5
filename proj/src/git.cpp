#include "minehub/git.hpp"

#include <algorithm>

#include "minehub/error.hpp"

namespace minehub {

namespace fs = std::filesystem;

namespace {

const std::vector<std::string> &git_env() {
  static const std::vector<std::string> env{"LC_ALL=C", "GIT_TERMINAL_PROMPT=0",
                                            "GIT_CONFIG_NOSYSTEM=1", "GIT_PAGER=cat"};
  return env;
}

std::vector<std::string> git_argv(const std::vector<std::string> &args) {
  std::vector<std::string> argv{"git", "-c", "core.quotepath=false", "-c",
                                "log.showSignature=false", "-c", "color.ui=false"};
  argv.insert(argv.end(), args.begin(), args.end());
  return argv;
}

} // namespace

struct GitRepo::BatchReader {
  std::mutex mutex;
  std::unique_ptr<ChildProcess> child;
};

GitRepo::GitRepo(fs::path dir) : dir_(std::move(dir)), batch_(std::make_shared<BatchReader>()) {
  std::error_code ec;
  if (!fs::exists(dir_, ec)) {
    throw Error(ErrorCode::missing_clone, "repository clone not found: " + dir_.string());
  }
  const auto r = try_run({"rev-parse", "--git-dir"});
  if (r.exit_code != 0) {
    throw Error(ErrorCode::git, "not a git repository: " + dir_.string());
  }
}

ProcessResult GitRepo::try_run(const std::vector<std::string> &args, std::string input) const {
  ProcessOptions options;
  options.cwd = dir_;
  options.input = std::move(input);
  options.extra_env = git_env();
  return run_process(git_argv(args), options);
}

std::string GitRepo::run(const std::vector<std::string> &args) const {
  auto r = try_run(args);
  if (r.exit_code != 0) {
    std::string cmd;
    for (const auto &a : args) {
      cmd += " " + a;
    }
    throw Error(ErrorCode::git, "git" + cmd + " failed: " + std::string(trim(r.err)));
  }
  return std::move(r.out);
}

std::vector<std::pair<std::string, std::string>> GitRepo::branch_heads() const {
  std::vector<std::pair<std::string, std::string>> heads;
  const auto out = run({"for-each-ref", "--format=%(objectname) %(refname:strip=2)", "refs/heads"});
  for (auto line : split_lines(out)) {
    const auto sp = line.find(' ');
    if (sp == std::string_view::npos) {
      continue;
    }
    heads.emplace_back(std::string(line.substr(sp + 1)), std::string(line.substr(0, sp)));
  }
  std::sort(heads.begin(), heads.end());
  return heads;
}

std::vector<std::string> GitRepo::rev_list(std::string_view rev) const {
  std::vector<std::string> args{"rev-list"};
  if (rev.empty()) {
    if (branch_heads().empty()) {
      return {};
    }
    args.emplace_back("--branches");
  } else {
    args.emplace_back(rev);
  }
  std::vector<std::string> hashes;
  const auto out = run(args);
  for (auto line : split_lines(out)) {
    if (!line.empty()) {
      hashes.emplace_back(line);
    }
  }
  return hashes;
}

Timestamp parse_raw_git_date(std::string_view raw) {
  raw = trim(raw);
  const auto sp = raw.find(' ');
  Timestamp ts;
  ts.epoch_seconds = std::stoll(std::string(raw.substr(0, sp)));
  if (sp != std::string_view::npos && raw.size() >= sp + 6) {
    const auto tz = raw.substr(sp + 1);
    const int sign = tz[0] == '-' ? -1 : 1;
    const int hh = std::stoi(std::string(tz.substr(1, 2)));
    const int mm = std::stoi(std::string(tz.substr(3, 2)));
    ts.offset_minutes = sign * (hh * 60 + mm);
  }
  return ts;
}

std::vector<GitCommitInfo> GitRepo::commits_on_branches() const {
  if (branch_heads().empty()) {
    return {};
  }
  const auto out = run({"log", "--branches", "--topo-order", "--reverse", "--no-color",
                        "--date=raw",
                        "--format=%H%x1f%P%x1f%an%x1f%ae%x1f%ad%x1f%cn%x1f%ce%x1f%cd%x1f%B%x00"});
  std::vector<GitCommitInfo> commits;
  std::size_t start = 0;
  while (start < out.size()) {
    std::size_t end = out.find('\0', start);
    if (end == std::string::npos) {
      end = out.size();
    }
    std::string_view record(out.data() + start, end - start);
    start = end + 1;
    while (!record.empty() && record.front() == '\n') {
      record.remove_prefix(1);
    }
    if (record.empty()) {
      continue;
    }
    std::vector<std::string_view> fields;
    std::size_t fs_pos = 0;
    for (int i = 0; i < 8; ++i) {
      const auto sep = record.find('\x1f', fs_pos);
      if (sep == std::string_view::npos) {
        throw Error(ErrorCode::git, "unexpected git log record");
      }
      fields.push_back(record.substr(fs_pos, sep - fs_pos));
      fs_pos = sep + 1;
    }
    GitCommitInfo c;
    c.hash = std::string(fields[0]);
    for (auto &p : split(fields[1], ' ')) {
      if (!p.empty()) {
        c.parents.push_back(std::move(p));
      }
    }
    c.author = {std::string(fields[2]), std::string(fields[3]), parse_raw_git_date(fields[4])};
    c.committer = {std::string(fields[5]), std::string(fields[6]), parse_raw_git_date(fields[7])};
    c.message = std::string(record.substr(fs_pos));
    commits.push_back(std::move(c));
  }
  return commits;
}

std::optional<std::string> GitRepo::resolve_commit(std::string_view rev) const {
  const auto r = try_run({"rev-parse", "--verify", "--quiet", std::string(rev) + "^{commit}"});
  if (r.exit_code != 0) {
    return std::nullopt;
  }
  return std::string(trim(r.out));
}

std::vector<std::string> GitRepo::parents(std::string_view hash) const {
  const auto content = read_object(hash);
  if (!content) {
    throw Error(ErrorCode::git, "unknown commit " + std::string(hash));
  }
  std::vector<std::string> out;
  for (auto line : split_lines(*content)) {
    if (line.empty()) {
      break;
    }
    if (line.rfind("parent ", 0) == 0) {
      out.emplace_back(line.substr(7));
    }
  }
  return out;
}

std::vector<TreeEntry> GitRepo::list_tree(std::string_view rev) const {
  const auto out = run({"ls-tree", "-r", "-z", "--full-tree", std::string(rev)});
  std::vector<TreeEntry> entries;
  std::size_t start = 0;
  while (start < out.size()) {
    const auto end = out.find('\0', start);
    const std::string_view rec(out.data() + start, (end == std::string::npos ? out.size() : end) - start);
    start = end == std::string::npos ? out.size() : end + 1;
    const auto tab = rec.find('\t');
    if (tab == std::string_view::npos) {
      continue;
    }
    const auto parts = split(rec.substr(0, tab), ' ');
    if (parts.size() != 3) {
      continue;
    }
    entries.push_back({parts[0], parts[1], parts[2], std::string(rec.substr(tab + 1))});
  }
  return entries;
}

std::optional<std::string> GitRepo::read_object(std::string_view name) const {
  if (name.find('\n') != std::string_view::npos) {
    return std::nullopt;
  }
  std::lock_guard lock(batch_->mutex);
  if (!batch_->child) {
    batch_->child = std::make_unique<ChildProcess>(git_argv({"cat-file", "--batch"}), dir_, git_env());
  }
  auto &child = *batch_->child;
  child.write(std::string(name) + "\n");
  const std::string header = child.read_line();
  if (header.size() >= 8 && header.compare(header.size() - 8, 8, " missing") == 0) {
    return std::nullopt;
  }
  if (header.size() >= 10 && header.compare(header.size() - 10, 10, " ambiguous") == 0) {
    return std::nullopt;
  }
  const auto last_space = header.rfind(' ');
  if (last_space == std::string::npos) {
    throw Error(ErrorCode::git, "unexpected cat-file header: " + header);
  }
  const auto size = static_cast<std::size_t>(std::stoull(header.substr(last_space + 1)));
  std::string content = child.read_exact(size);
  child.read_exact(1);
  return content;
}

std::optional<std::string> GitRepo::file_at(std::string_view rev, std::string_view path) const {
  return read_object(std::string(rev) + ":" + std::string(path));
}

std::optional<std::string> GitRepo::blob_id(std::string_view rev, std::string_view path) const {
  const auto r = try_run({"rev-parse", "--verify", "--quiet", std::string(rev) + ":" + std::string(path)});
  if (r.exit_code != 0) {
    return std::nullopt;
  }
  return std::string(trim(r.out));
}

bool looks_binary(std::string_view content) {
  return content.substr(0, 8000).find('\0') != std::string_view::npos;
}

bool is_full_hash(std::string_view s) {
  return s.size() == 40 && std::all_of(s.begin(), s.end(), [](char c) {
           return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
         });
}

} // namespace minehub
