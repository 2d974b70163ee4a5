#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace minehub {

struct ProcessResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

struct ProcessOptions {
  std::filesystem::path cwd;
  std::string input;
  std::vector<std::string> extra_env; // "KEY=VALUE"
};

/// Runs argv[0] (PATH lookup) without a shell, feeding `input` and capturing
/// both output streams.
ProcessResult run_process(const std::vector<std::string> &argv, const ProcessOptions &options = {});

/// Long-lived child with piped stdin/stdout (e.g. `git cat-file --batch`).
/// Not thread-safe; callers serialize access.
class ChildProcess {
public:
  ChildProcess(const std::vector<std::string> &argv, const std::filesystem::path &cwd,
               const std::vector<std::string> &extra_env = {});
  ~ChildProcess();

  ChildProcess(const ChildProcess &) = delete;
  ChildProcess &operator=(const ChildProcess &) = delete;

  void write(std::string_view data);
  std::string read_line();
  std::string read_exact(std::size_t n);

private:
  bool fill();

  int pid_ = -1;
  int in_fd_ = -1;
  int out_fd_ = -1;
  std::string buffer_;
};

} // namespace minehub
