#pragma once

#include <stdexcept>
#include <string>

namespace laguna {

enum class ErrorCode {
  ShapeMismatch,
  NonFinite,
  NonPositiveTemperature,
  NotPositiveDefinite,
  NotSymmetric,
  NonScalarLoss,
  EmptyParameterList,
  BadMagic,
  TruncatedFile,
  DimMismatch,
  MissingSourceLabels,
  ClassCountMismatch,
  DanglingReference,
  RatioOutOfRange,
  ZeroVector,
  DimTooSmall,
  LengthMismatch,
  LabelOutOfRange,
  MissingPseudoLabels,
  NoLabelsForSplit,
  LabelAccessViolation,
  IoError,
  InvalidConfig,
  ParseError,
};

const char* to_string(ErrorCode code);

// Every failure the library reports carries one of the codes above so callers
// (CLI exit codes, tests) can branch on the kind rather than the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace laguna
