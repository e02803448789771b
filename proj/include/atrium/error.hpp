#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace atrium {

enum class ErrorCode {
  NonConvergence,
  PointAtInfinity,
  DegenerateConfiguration,
  NonMonotonicTime,
  TooFewPoints,
  EmptyBins,
  EmptySteps,
  TooFewValues,
  UnknownRecord,
  UnsupportedGlyph,
  MalformedFile,
  SchemaVersionMismatch,
  ConfigError,
  InvalidArgument,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::PointAtInfinity: return "PointAtInfinity";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::NonMonotonicTime: return "NonMonotonicTime";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::EmptyBins: return "EmptyBins";
    case ErrorCode::EmptySteps: return "EmptySteps";
    case ErrorCode::TooFewValues: return "TooFewValues";
    case ErrorCode::UnknownRecord: return "UnknownRecord";
    case ErrorCode::UnsupportedGlyph: return "UnsupportedGlyph";
    case ErrorCode::MalformedFile: return "MalformedFile";
    case ErrorCode::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace atrium
