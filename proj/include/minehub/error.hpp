#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace minehub {

enum class ErrorCode {
  invalid_argument,
  not_found,
  unknown_collection,
  unknown_field,
  missing_natural_key,
  schema_violation,
  io,
  git,
  missing_clone,
  malformed_payload,
  authentication,
  rate_limited,
  taxonomy,
  out_of_range,
  precondition,
};

std::string_view to_string(ErrorCode code);

/// Domain error carried through every layer; the CLI maps it to exit code 1
/// and the HTTP layer to a {code, message} body.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string &message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

} // namespace minehub
