#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace minehub {

struct SanitizedText {
  std::string text;
  bool had_errors = false;
};

/// Replaces every invalid UTF-8 sequence with U+FFFD.
SanitizedText sanitize_utf8(std::string_view bytes);

std::string to_lower_ascii(std::string_view s);
std::string_view trim(std::string_view s);
bool is_blank(std::string_view s);

/// Splits on '\n'. A trailing newline does not start an extra line and a
/// trailing '\r' is kept (callers that care strip it).
std::vector<std::string_view> split_lines(std::string_view content);

std::vector<std::string> split(std::string_view s, char sep);
std::string join(const std::vector<std::string> &parts, std::string_view sep);

/// Lower-cased maximal runs of ASCII letters/digits.
std::vector<std::string> word_tokens(std::string_view s);

/// True when `word` occurs in `text` bounded by non-word characters
/// (case-insensitive, ASCII). `word` may contain spaces.
bool contains_word(std::string_view text, std::string_view word);

/// One pattern per non-blank line (UTF-8); lines starting with '#' are
/// skipped. Throws io when unreadable.
std::vector<std::string> read_pattern_file(const std::string &path);

/// Decodes UTF-8 to code points; invalid bytes decode to U+FFFD.
std::vector<char32_t> decode_utf8(std::string_view s);
std::string encode_utf8(const std::vector<char32_t> &cps);

// ---- time ---------------------------------------------------------------

/// A point in time normalized to UTC, remembering the source offset.
struct Timestamp {
  std::int64_t epoch_seconds = 0;
  int offset_minutes = 0;
};

/// "YYYY-MM-DDTHH:MM:SSZ"
std::string format_utc(std::int64_t epoch_seconds);

/// Accepts "YYYY-MM-DD", "YYYY-MM-DDTHH:MM:SS[.fff](Z|+hh:mm|+hhmm)" and a
/// space instead of 'T'. Missing zone means UTC.
std::optional<Timestamp> parse_iso8601(std::string_view s);

/// Parses a stored UTC timestamp; throws Error on malformed input.
std::int64_t parse_utc(std::string_view s);

std::int64_t now_epoch_seconds();
std::int64_t now_epoch_millis();

inline constexpr std::int64_t seconds_per_day = 86400;

} // namespace minehub
