#include "minehub/error.hpp"

namespace minehub {

std::string_view to_string(ErrorCode code) {
  switch (code) {
  case ErrorCode::invalid_argument: return "invalid-argument";
  case ErrorCode::not_found: return "not-found";
  case ErrorCode::unknown_collection: return "unknown-collection";
  case ErrorCode::unknown_field: return "unknown-field";
  case ErrorCode::missing_natural_key: return "missing-natural-key";
  case ErrorCode::schema_violation: return "schema-violation";
  case ErrorCode::io: return "io";
  case ErrorCode::git: return "git";
  case ErrorCode::missing_clone: return "missing-clone";
  case ErrorCode::malformed_payload: return "malformed-payload";
  case ErrorCode::authentication: return "authentication";
  case ErrorCode::rate_limited: return "rate-limited";
  case ErrorCode::taxonomy: return "taxonomy";
  case ErrorCode::out_of_range: return "out-of-range";
  case ErrorCode::precondition: return "precondition";
  }
  return "unknown";
}

} // namespace minehub
