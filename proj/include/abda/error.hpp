#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace abda {

enum class ErrorCode {
  InvalidArgument,
  NonFiniteValue,
  MissingOverride,
  TooManyTrees,
  InvalidData,
  InvalidInterval,
  EmptyColumn,
  AllMissing,
  NonFiniteLikelihood,
  NoPosterior,
  NoMissing,
  ZeroRange,
  SingleClass,
  BadFractions,
  ParseError,
  MixedTypeColumn,
  VersionMismatch,
  CorruptFile,
  IoError,
  InvalidModel,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::MissingOverride: return "MissingOverride";
    case ErrorCode::TooManyTrees: return "TooManyTrees";
    case ErrorCode::InvalidData: return "InvalidData";
    case ErrorCode::InvalidInterval: return "InvalidInterval";
    case ErrorCode::EmptyColumn: return "EmptyColumn";
    case ErrorCode::AllMissing: return "AllMissing";
    case ErrorCode::NonFiniteLikelihood: return "NonFiniteLikelihood";
    case ErrorCode::NoPosterior: return "NoPosterior";
    case ErrorCode::NoMissing: return "NoMissing";
    case ErrorCode::ZeroRange: return "ZeroRange";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::BadFractions: return "BadFractions";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::MixedTypeColumn: return "MixedTypeColumn";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptFile: return "CorruptFile";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidModel: return "InvalidModel";
  }
  return "Unknown";
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

}  // namespace abda
