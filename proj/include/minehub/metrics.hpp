#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "minehub/git.hpp"
#include "minehub/store.hpp"

namespace minehub {

enum class Language { java, python, unknown };
enum class LineClass { code, comment, blank };

std::string_view to_string(LineClass c);

Language language_for_path(std::string_view path);

struct ScannedLine {
  LineClass kind = LineClass::blank;
  /// Text that sits inside comments (or docstrings) on this line.
  std::string comment_text;
};

/// Line-based scanner tracking block comment and string state. Mixed
/// code+comment lines classify as code. Unknown languages: non-blank is code.
std::vector<ScannedLine> scan_lines(std::string_view content, Language language);
std::vector<LineClass> classify_lines(std::string_view content, Language language);

struct LineCounts {
  int lloc = 0;
  int cloc = 0;
  int blank = 0;
  int total_lines = 0;
};

LineCounts count_lines(std::string_view content, Language language);

/// Java: dotted path without the trailing ';'. Python: `from A import B` ->
/// "A.B", `import A as X` -> "A".
std::vector<std::string> extract_imports(std::string_view content, Language language);

/// {"metrics": {...}, "imports": [...]} for one file's content.
Document measure_file(std::string_view path, std::string_view content);

/// Tree entries of `rev` that are regular, non-binary blobs.
std::vector<TreeEntry> eligible_tree_entries(const GitRepo &repo, std::string_view rev);

struct MetricsSummary {
  std::size_t files_measured = 0;
};

MetricsSummary compute_metrics(Store &store, std::string_view commit_id);
MetricsSummary compute_metrics(Store &store, const GitRepo &repo, const Document &commit);

} // namespace minehub
