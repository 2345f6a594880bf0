#pragma once

#include <stdexcept>
#include <string>

namespace semcoh {

enum class ErrorCode {
  io,
  parse,
  duplicate_id,
  invalid_argument,
  missing,
  mismatch,
  non_finite,
  unknown_hit,
  invalid_choice,
  config_mismatch,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::io: return "io";
    case ErrorCode::parse: return "parse";
    case ErrorCode::duplicate_id: return "duplicate_id";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::missing: return "missing";
    case ErrorCode::mismatch: return "mismatch";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::unknown_hit: return "unknown_hit";
    case ErrorCode::invalid_choice: return "invalid_choice";
    case ErrorCode::config_mismatch: return "config_mismatch";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace semcoh
