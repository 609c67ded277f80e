#pragma once

#include <stdexcept>
#include <string>

namespace fpcert {

enum class ErrorCode {
  NonFiniteInput,
  Overflow,
  DivisorSpansZero,
  NegativeOperand,
  InvalidInterval,
  DimensionMismatch,
  SameLabels,
  ZeroWeightNorm,
  InvalidBracket,
  DomainError,
  ZeroDirection,
  NotFound,
  DegenerateData,
  BadMagic,
  TruncatedFile,
  CountMismatch,
  SchemaError,
  BitPatternMismatch,
  IoError,
  InvalidArgument,
  InvariantViolation,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::Overflow: return "Overflow";
    case ErrorCode::DivisorSpansZero: return "DivisorSpansZero";
    case ErrorCode::NegativeOperand: return "NegativeOperand";
    case ErrorCode::InvalidInterval: return "InvalidInterval";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SameLabels: return "SameLabels";
    case ErrorCode::ZeroWeightNorm: return "ZeroWeightNorm";
    case ErrorCode::InvalidBracket: return "InvalidBracket";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::ZeroDirection: return "ZeroDirection";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::DegenerateData: return "DegenerateData";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::BitPatternMismatch: return "BitPatternMismatch";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvariantViolation: return "InvariantViolation";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace fpcert
