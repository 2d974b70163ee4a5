#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "minehub/store.hpp"

namespace httplib {
class Server;
}

namespace minehub {

inline const std::vector<std::string> default_issue_taxonomy{
    "bug", "improvement", "feature", "task", "documentation", "other"};

inline const std::vector<std::string> hunk_line_labels{"bugfix", "refactoring", "unrelated",
                                                       "whitespace", "documentation"};

/// Dashboard reads and the three manual validations. Every write appends a
/// ValidationRecord and then updates the protected field it describes.
class ValidationService {
public:
  explicit ValidationService(Store &store,
                             std::vector<std::string> taxonomy = default_issue_taxonomy);

  Document projects() const;
  Document stats(std::string_view project) const;
  /// filter: all, bugfix, message (alias message_query; needs a query).
  Document commit_graph(std::string_view project, std::string_view filter,
                        std::string_view query = {}) const;
  Document links(std::string_view project, std::string_view status = {}) const;
  Document issue(std::string_view issue_id) const;
  Document commit(std::string_view hash) const;
  Document commit_hunks(std::string_view hash) const;

  Document set_link_verdict(std::string_view link_id, std::string_view value,
                            std::string_view validator);
  Document set_issue_type(std::string_view issue_id, std::string_view validated_type,
                          std::string_view validator);
  Document set_hunk_line_label(std::string_view hunk_id, int line_no, std::string_view label,
                               std::string_view validator);

private:
  std::int64_t append_record(std::string_view kind, std::string_view target,
                             std::string_view value, std::string_view validator,
                             std::optional<int> line_no, const std::string &created_at);

  Store &store_;
  std::vector<std::string> taxonomy_;
  std::mutex write_mutex_;
};

struct ReplaySummary {
  std::size_t applied = 0;
  std::size_t skipped = 0; // targets absent from the store
};

/// Re-applies every ValidationRecord in seq order to the protected fields.
ReplaySummary replay_validation_log(Store &store);

/// Routes under /api; `static_dir` (optional) is mounted at "/".
std::unique_ptr<httplib::Server> make_validation_server(ValidationService &service,
                                                        const std::filesystem::path &static_dir = {});

/// Blocks serving on host:port until the server is stopped.
void serve(Store &store, const std::string &host, int port,
           const std::filesystem::path &static_dir = {});

} // namespace minehub
