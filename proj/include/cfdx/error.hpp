#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cfdx {

enum class ErrorCode {
  MissingColumn,
  NonNumericCell,
  UnknownLabel,
  EmptyDataset,
  SchemaMismatch,
  ClassTooSmall,
  SingleClassDataset,
  NonFiniteLoss,
  LengthMismatch,
  InvalidTarget,
  IndexOutOfRange,
  AllClassesFailed,
  MixedTransitions,
  DegenerateVariance,
  DegenerateSample,
  InsufficientPool,
  LeakageViolation,
  InvalidLock,
  InvalidArgument,
  IoError,
  ParseError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::NonNumericCell: return "NonNumericCell";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::ClassTooSmall: return "ClassTooSmall";
    case ErrorCode::SingleClassDataset: return "SingleClassDataset";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::InvalidTarget: return "InvalidTarget";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::AllClassesFailed: return "AllClassesFailed";
    case ErrorCode::MixedTransitions: return "MixedTransitions";
    case ErrorCode::DegenerateVariance: return "DegenerateVariance";
    case ErrorCode::DegenerateSample: return "DegenerateSample";
    case ErrorCode::InsufficientPool: return "InsufficientPool";
    case ErrorCode::LeakageViolation: return "LeakageViolation";
    case ErrorCode::InvalidLock: return "InvalidLock";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable code plus
/// free-form detail (row/column, offending value, ...).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string detail = {})
      : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message,
                              std::string detail = {}) {
  throw Error(code, message, std::move(detail));
}

}  // namespace cfdx
