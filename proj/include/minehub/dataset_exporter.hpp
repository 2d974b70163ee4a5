#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "minehub/store.hpp"

namespace minehub {

struct ExportOptions {
  std::string release; // revision hash or tag
  int history_window_days = 180;
  int label_window_days = 180;
  bool validated_only = false;
};

struct DatasetRow {
  std::string path;
  std::map<std::string, double> features;
  std::vector<std::string> bug_issue_ids; // sorted, unique
  int bug_count = 0;
};

/// Rows sorted by path, one per non-binary Java/Python file at the release.
/// Throws not-found for an unknown revision and precondition when the
/// induce stage has not run or metrics are missing.
std::vector<DatasetRow> build_release_dataset(const Store &store, std::string_view project,
                                              const ExportOptions &options);

/// Comma-separated with a header row; features sorted by name; issue ids
/// joined with ';'.
std::string render_dataset(const std::vector<DatasetRow> &rows);

struct ExportSummary {
  std::size_t rows = 0;
  std::size_t buggy_rows = 0;
  std::string release_hash;
};

ExportSummary export_release(const Store &store, std::string_view project,
                             const ExportOptions &options, const std::filesystem::path &out);

} // namespace minehub
