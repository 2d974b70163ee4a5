#include <cctype>
#include <cstring>

#include "minehub/metrics.hpp"
#include "minehub/text.hpp"

namespace minehub {

namespace {

bool starts_with_at(std::string_view s, std::size_t i, std::string_view prefix) {
  return s.substr(i, prefix.size()) == prefix;
}

struct LineState {
  bool has_code = false;
  std::string comment;

  void add_comment(std::string_view text) {
    if (!comment.empty()) {
      comment.push_back(' ');
    }
    comment.append(text);
  }
};

ScannedLine finish(std::string_view raw, const LineState &st) {
  ScannedLine out;
  out.comment_text = st.comment;
  if (is_blank(raw)) {
    out.kind = LineClass::blank;
  } else if (st.has_code) {
    out.kind = LineClass::code;
  } else {
    out.kind = LineClass::comment;
  }
  return out;
}

std::vector<ScannedLine> scan_java(std::string_view content) {
  std::vector<ScannedLine> out;
  bool in_block = false;
  bool in_text_block = false;
  for (auto line : split_lines(content)) {
    LineState st;
    std::size_t i = 0;
    while (i < line.size()) {
      if (in_block) {
        const auto end = line.find("*/", i);
        st.add_comment(line.substr(i, end == std::string_view::npos ? end : end - i));
        if (end == std::string_view::npos) {
          i = line.size();
        } else {
          in_block = false;
          i = end + 2;
        }
        continue;
      }
      if (in_text_block) {
        st.has_code = true;
        const auto end = line.find("\"\"\"", i);
        if (end == std::string_view::npos) {
          i = line.size();
        } else {
          in_text_block = false;
          i = end + 3;
        }
        continue;
      }
      const char c = line[i];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
      } else if (starts_with_at(line, i, "//")) {
        st.add_comment(line.substr(i + 2));
        i = line.size();
      } else if (starts_with_at(line, i, "/*")) {
        in_block = true;
        i += 2;
      } else if (starts_with_at(line, i, "\"\"\"")) {
        st.has_code = true;
        in_text_block = true;
        i += 3;
      } else if (c == '"' || c == '\'') {
        st.has_code = true;
        ++i;
        while (i < line.size() && line[i] != c) {
          i += line[i] == '\\' ? 2 : 1;
        }
        ++i;
      } else {
        st.has_code = true;
        ++i;
      }
    }
    out.push_back(finish(line, st));
  }
  return out;
}

std::size_t python_string_prefix(std::string_view line, std::size_t i) {
  std::size_t j = i;
  while (j < line.size() && j - i < 2 && std::strchr("rRbBuUfF", line[j]) != nullptr) {
    ++j;
  }
  if (j < line.size() && (line[j] == '"' || line[j] == '\'')) {
    return j - i;
  }
  return std::string_view::npos;
}

std::vector<ScannedLine> scan_python(std::string_view content) {
  std::vector<ScannedLine> out;
  std::string triple;        // active triple-quote delimiter
  bool triple_is_doc = false;
  int depth = 0;
  bool continuation = false;
  for (auto line : split_lines(content)) {
    LineState st;
    const bool statement_start = depth == 0 && !continuation && triple.empty();
    bool seen_token = false;
    std::size_t i = 0;
    while (i < line.size()) {
      if (!triple.empty()) {
        const auto end = line.find(triple, i);
        const auto part = line.substr(i, end == std::string_view::npos ? end : end - i);
        if (triple_is_doc) {
          st.add_comment(part);
        } else {
          st.has_code = true;
        }
        if (end == std::string_view::npos) {
          i = line.size();
        } else {
          i = end + 3;
          triple.clear();
        }
        continue;
      }
      const char c = line[i];
      if (std::isspace(static_cast<unsigned char>(c))) {
        ++i;
        continue;
      }
      if (c == '#') {
        st.add_comment(line.substr(i + 1));
        break;
      }
      const auto prefix = python_string_prefix(line, i);
      if (prefix != std::string_view::npos) {
        const std::size_t q = i + prefix;
        const char quote = line[q];
        if (starts_with_at(line, q, std::string(3, quote))) {
          triple = std::string(3, quote);
          triple_is_doc = statement_start && !seen_token;
          if (!triple_is_doc) {
            st.has_code = true;
          }
          seen_token = true;
          i = q + 3;
          continue;
        }
        st.has_code = true;
        seen_token = true;
        i = q + 1;
        while (i < line.size() && line[i] != quote) {
          i += line[i] == '\\' ? 2 : 1;
        }
        ++i;
        continue;
      }
      if (c == '(' || c == '[' || c == '{') {
        ++depth;
      } else if ((c == ')' || c == ']' || c == '}') && depth > 0) {
        --depth;
      }
      st.has_code = true;
      seen_token = true;
      ++i;
    }
    const auto stripped = trim(line);
    continuation = triple.empty() && !stripped.empty() && stripped.back() == '\\' &&
                   st.comment.empty();
    out.push_back(finish(line, st));
  }
  return out;
}

} // namespace

std::string_view to_string(LineClass c) {
  switch (c) {
  case LineClass::code: return "code";
  case LineClass::comment: return "comment";
  case LineClass::blank: return "blank";
  }
  return "code";
}

Language language_for_path(std::string_view path) {
  const auto dot = path.rfind('.');
  if (dot == std::string_view::npos || path.find('/', dot) != std::string_view::npos) {
    return Language::unknown;
  }
  const auto ext = to_lower_ascii(path.substr(dot));
  if (ext == ".java") {
    return Language::java;
  }
  if (ext == ".py") {
    return Language::python;
  }
  return Language::unknown;
}

std::vector<ScannedLine> scan_lines(std::string_view content, Language language) {
  switch (language) {
  case Language::java: return scan_java(content);
  case Language::python: return scan_python(content);
  case Language::unknown: break;
  }
  std::vector<ScannedLine> out;
  for (auto line : split_lines(content)) {
    out.push_back({is_blank(line) ? LineClass::blank : LineClass::code, {}});
  }
  return out;
}

std::vector<LineClass> classify_lines(std::string_view content, Language language) {
  std::vector<LineClass> out;
  for (const auto &l : scan_lines(content, language)) {
    out.push_back(l.kind);
  }
  return out;
}

LineCounts count_lines(std::string_view content, Language language) {
  LineCounts counts;
  for (const auto c : classify_lines(content, language)) {
    ++counts.total_lines;
    switch (c) {
    case LineClass::code: ++counts.lloc; break;
    case LineClass::comment: ++counts.cloc; break;
    case LineClass::blank: ++counts.blank; break;
    }
  }
  return counts;
}

} // namespace minehub
