#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace taugraph {

/// Every failure the library reports carries one of these kinds.
enum class ErrorKind {
  Usage,
  BadConfig,
  MissingColumn,
  BadValue,
  DuplicateId,
  DegenerateGeometry,
  CorruptPayload,
  EmptyGraph,
  TooFewObjects,
  ZeroLength,
  SchemaMismatch,
  TooFewGroups,
  SingleClass,
  DimensionMismatch,
  TooManyFeaturesForExact,
  LengthMismatch,
  BadK,
  NonFiniteLoss,
  NoConvergence,
  Io,
};

inline std::string_view kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::Usage: return "Usage";
    case ErrorKind::BadConfig: return "BadConfig";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::BadValue: return "BadValue";
    case ErrorKind::DuplicateId: return "DuplicateId";
    case ErrorKind::DegenerateGeometry: return "DegenerateGeometry";
    case ErrorKind::CorruptPayload: return "CorruptPayload";
    case ErrorKind::EmptyGraph: return "EmptyGraph";
    case ErrorKind::TooFewObjects: return "TooFewObjects";
    case ErrorKind::ZeroLength: return "ZeroLength";
    case ErrorKind::SchemaMismatch: return "SchemaMismatch";
    case ErrorKind::TooFewGroups: return "TooFewGroups";
    case ErrorKind::SingleClass: return "SingleClass";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::TooManyFeaturesForExact: return "TooManyFeaturesForExact";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::BadK: return "BadK";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::NoConvergence: return "NoConvergence";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail)
      : std::runtime_error(std::string(kind_name(kind)) + ": " + detail),
        kind_(kind),
        detail_(detail) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

/// Process exit code for the CLI: 1 usage/config, 2 data, 3 numeric.
inline int exit_code_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::Usage:
    case ErrorKind::BadConfig:
      return 1;
    case ErrorKind::NonFiniteLoss:
    case ErrorKind::NoConvergence:
      return 3;
    default:
      return 2;
  }
}

}  // namespace taugraph
