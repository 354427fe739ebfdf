#include "pogp/errors.hpp"

namespace pogp {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::SchemaError: return "SchemaError";
    case ErrorKind::ValidationError: return "ValidationError";
    case ErrorKind::DegenerateArm: return "DegenerateArm";
    case ErrorKind::Overflow: return "Overflow";
    case ErrorKind::OverlapViolation: return "OverlapViolation";
    case ErrorKind::InvalidTask: return "InvalidTask";
    case ErrorKind::NegativeVariance: return "NegativeVariance";
    case ErrorKind::AllRestartsFailed: return "AllRestartsFailed";
    case ErrorKind::QueryOutsideSupport: return "QueryOutsideSupport";
    case ErrorKind::RegionTooSmall: return "RegionTooSmall";
    case ErrorKind::InsufficientData: return "InsufficientData";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::RuntimeFailure: return "RuntimeFailure";
  }
  return "Unknown";
}

}  // namespace pogp
