#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace overlap {

// Failure categories surfaced to callers and, through the CLI, as exit codes.
enum class ErrorKind {
  invalid_config,
  singular_covariance,
  missing_group,
  separation_detected,
  empty_margin,
  division_hazard,
  oracle_unavailable,
  unstable_estimand,
  single_class,
  schema_mismatch,
  parse_error,
  io_error,
  unsupported,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_config: return "invalid-config";
    case ErrorKind::singular_covariance: return "singular-covariance";
    case ErrorKind::missing_group: return "missing-group";
    case ErrorKind::separation_detected: return "separation-detected";
    case ErrorKind::empty_margin: return "empty-margin";
    case ErrorKind::division_hazard: return "division-hazard";
    case ErrorKind::oracle_unavailable: return "oracle-unavailable";
    case ErrorKind::unstable_estimand: return "unstable-estimand";
    case ErrorKind::single_class: return "single-class";
    case ErrorKind::schema_mismatch: return "schema-mismatch";
    case ErrorKind::parse_error: return "parse-error";
    case ErrorKind::io_error: return "io-error";
    case ErrorKind::unsupported: return "unsupported";
  }
  return "unknown";
}

// Process exit code for a failure category; 0 is reserved for success.
constexpr int exit_code(ErrorKind kind) { return 10 + static_cast<int>(kind); }

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace overlap
