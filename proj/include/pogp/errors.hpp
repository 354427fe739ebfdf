#pragma once

#include <stdexcept>
#include <string>

namespace pogp {

enum class ErrorKind {
  NotPositiveDefinite,
  DimensionMismatch,
  NoConvergence,
  ParseError,
  SchemaError,
  ValidationError,
  DegenerateArm,
  Overflow,
  OverlapViolation,
  InvalidTask,
  NegativeVariance,
  AllRestartsFailed,
  QueryOutsideSupport,
  RegionTooSmall,
  InsufficientData,
  ConfigError,
  RuntimeFailure,
};

const char* to_string(ErrorKind kind);

// Single exception type for the library; callers switch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace pogp
