#include "minehub/process.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstdlib>
#include <cstring>

#include "minehub/error.hpp"

extern char **environ;

namespace minehub {

namespace {

void ignore_sigpipe() {
  static const bool once = [] {
    ::signal(SIGPIPE, SIG_IGN);
    return true;
  }();
  (void)once;
}

// PATH lookup happens before fork so the child only calls
// async-signal-safe functions.
std::string resolve_program(const std::string &name) {
  if (name.find('/') != std::string::npos) {
    return name;
  }
  const char *path = std::getenv("PATH");
  std::string dirs = path != nullptr ? path : "/usr/bin:/bin";
  std::size_t start = 0;
  while (start <= dirs.size()) {
    const std::size_t colon = dirs.find(':', start);
    const std::string dir = dirs.substr(start, colon == std::string::npos ? std::string::npos : colon - start);
    const std::string candidate = (dir.empty() ? std::string(".") : dir) + "/" + name;
    if (::access(candidate.c_str(), X_OK) == 0) {
      return candidate;
    }
    if (colon == std::string::npos) break;
    start = colon + 1;
  }
  return name;
}

struct ExecImage {
  std::vector<std::string> args;
  std::vector<std::string> env;
  std::vector<char *> argv;
  std::vector<char *> envp;
  std::string program;

  ExecImage(const std::vector<std::string> &a, const std::vector<std::string> &extra) : args(a) {
    program = resolve_program(args.front());
    for (char **e = environ; e != nullptr && *e != nullptr; ++e) {
      env.emplace_back(*e);
    }
    for (const auto &kv : extra) {
      const auto key = kv.substr(0, kv.find('=') + 1);
      std::erase_if(env, [&key](const std::string &e) { return e.rfind(key, 0) == 0; });
      env.push_back(kv);
    }
    for (auto &s : args) {
      argv.push_back(s.data());
    }
    argv.push_back(nullptr);
    for (auto &s : env) {
      envp.push_back(s.data());
    }
    envp.push_back(nullptr);
  }
};

[[noreturn]] void exec_child(ExecImage &image, const std::filesystem::path &cwd) {
  if (!cwd.empty() && ::chdir(cwd.c_str()) != 0) {
    ::_exit(127);
  }
  ::execve(image.program.c_str(), image.argv.data(), image.envp.data());
  ::_exit(127);
}

void make_pipe(int fds[2]) {
  if (::pipe2(fds, O_CLOEXEC) != 0) {
    throw Error(ErrorCode::io, std::string("pipe failed: ") + std::strerror(errno));
  }
}

int wait_child(int pid) {
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0) {
    if (errno != EINTR) {
      return -1;
    }
  }
  if (WIFEXITED(status)) {
    return WEXITSTATUS(status);
  }
  return 128 + (WIFSIGNALED(status) ? WTERMSIG(status) : 0);
}

} // namespace

ProcessResult run_process(const std::vector<std::string> &argv, const ProcessOptions &options) {
  ignore_sigpipe();
  if (argv.empty()) {
    throw Error(ErrorCode::invalid_argument, "empty command line");
  }
  ExecImage image(argv, options.extra_env);
  int in[2];
  int out[2];
  int err[2];
  make_pipe(in);
  make_pipe(out);
  make_pipe(err);

  const pid_t pid = ::fork();
  if (pid < 0) {
    throw Error(ErrorCode::io, std::string("fork failed: ") + std::strerror(errno));
  }
  if (pid == 0) {
    ::dup2(in[0], STDIN_FILENO);
    ::dup2(out[1], STDOUT_FILENO);
    ::dup2(err[1], STDERR_FILENO);
    exec_child(image, options.cwd);
  }
  ::close(in[0]);
  ::close(out[1]);
  ::close(err[1]);

  ProcessResult result;
  std::size_t written = 0;
  int in_fd = in[1];
  if (options.input.empty()) {
    ::close(in_fd);
    in_fd = -1;
  } else {
    ::fcntl(in_fd, F_SETFL, O_NONBLOCK);
  }
  int out_fd = out[0];
  int err_fd = err[0];
  char buf[65536];
  while (out_fd >= 0 || err_fd >= 0 || in_fd >= 0) {
    pollfd fds[3];
    nfds_t n = 0;
    if (out_fd >= 0) fds[n++] = {out_fd, POLLIN, 0};
    if (err_fd >= 0) fds[n++] = {err_fd, POLLIN, 0};
    if (in_fd >= 0) fds[n++] = {in_fd, POLLOUT, 0};
    if (::poll(fds, n, -1) < 0) {
      if (errno == EINTR) continue;
      break;
    }
    for (nfds_t i = 0; i < n; ++i) {
      if (fds[i].revents == 0) continue;
      const int fd = fds[i].fd;
      if (fd == in_fd) {
        const ssize_t w = ::write(in_fd, options.input.data() + written, options.input.size() - written);
        if (w > 0) written += static_cast<std::size_t>(w);
        if (w < 0 && errno != EAGAIN && errno != EINTR) written = options.input.size();
        if (written >= options.input.size()) {
          ::close(in_fd);
          in_fd = -1;
        }
        continue;
      }
      const ssize_t r = ::read(fd, buf, sizeof buf);
      if (r > 0) {
        (fd == out_fd ? result.out : result.err).append(buf, static_cast<std::size_t>(r));
      } else if (r == 0 || (errno != EAGAIN && errno != EINTR)) {
        ::close(fd);
        (fd == out_fd ? out_fd : err_fd) = -1;
      }
    }
  }
  result.exit_code = wait_child(pid);
  return result;
}

ChildProcess::ChildProcess(const std::vector<std::string> &argv, const std::filesystem::path &cwd,
                           const std::vector<std::string> &extra_env) {
  ignore_sigpipe();
  ExecImage image(argv, extra_env);
  int in[2];
  int out[2];
  make_pipe(in);
  make_pipe(out);
  pid_ = ::fork();
  if (pid_ < 0) {
    throw Error(ErrorCode::io, std::string("fork failed: ") + std::strerror(errno));
  }
  if (pid_ == 0) {
    ::dup2(in[0], STDIN_FILENO);
    ::dup2(out[1], STDOUT_FILENO);
    const int devnull = ::open("/dev/null", O_WRONLY);
    if (devnull >= 0) ::dup2(devnull, STDERR_FILENO);
    exec_child(image, cwd);
  }
  ::close(in[0]);
  ::close(out[1]);
  in_fd_ = in[1];
  out_fd_ = out[0];
}

ChildProcess::~ChildProcess() {
  if (in_fd_ >= 0) ::close(in_fd_);
  if (out_fd_ >= 0) ::close(out_fd_);
  if (pid_ > 0) wait_child(pid_);
}

void ChildProcess::write(std::string_view data) {
  while (!data.empty()) {
    const ssize_t w = ::write(in_fd_, data.data(), data.size());
    if (w < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::io, std::string("child write failed: ") + std::strerror(errno));
    }
    data.remove_prefix(static_cast<std::size_t>(w));
  }
}

bool ChildProcess::fill() {
  char buf[65536];
  while (true) {
    const ssize_t r = ::read(out_fd_, buf, sizeof buf);
    if (r > 0) {
      buffer_.append(buf, static_cast<std::size_t>(r));
      return true;
    }
    if (r == 0) return false;
    if (errno != EINTR) return false;
  }
}

std::string ChildProcess::read_line() {
  std::size_t nl;
  while ((nl = buffer_.find('\n')) == std::string::npos) {
    if (!fill()) {
      throw Error(ErrorCode::io, "child process closed its output");
    }
  }
  std::string line = buffer_.substr(0, nl);
  buffer_.erase(0, nl + 1);
  return line;
}

std::string ChildProcess::read_exact(std::size_t n) {
  while (buffer_.size() < n) {
    if (!fill()) {
      throw Error(ErrorCode::io, "child process closed its output");
    }
  }
  std::string data = buffer_.substr(0, n);
  buffer_.erase(0, n);
  return data;
}

} // namespace minehub
