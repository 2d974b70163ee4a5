#pragma once

#include <filesystem>
#include <optional>
#include <string>

namespace minehub {

/// Runs one `minehub` invocation. Exit codes: 0 success, 1 domain error,
/// 2 usage error. Summaries go to stdout (one JSON document per line), logs
/// to stderr.
int dispatch(int argc, char **argv);

/// Data directory: explicit flag, else MINEHUB_DATADIR, else `datadir` from
/// `minehub.toml` in `cwd`, else "<cwd>/minehub-data".
std::filesystem::path resolve_datadir(const std::optional<std::string> &flag,
                                      const std::filesystem::path &cwd);

/// Minimal `key = "value"` reader for minehub.toml (comments and sections
/// ignored).
std::optional<std::string> read_toml_value(const std::filesystem::path &file,
                                           const std::string &key);

} // namespace minehub
