#include "laguna/error.hpp"

namespace laguna {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::NonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::NotSymmetric: return "NotSymmetric";
    case ErrorCode::NonScalarLoss: return "NonScalarLoss";
    case ErrorCode::EmptyParameterList: return "EmptyParameterList";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::MissingSourceLabels: return "MissingSourceLabels";
    case ErrorCode::ClassCountMismatch: return "ClassCountMismatch";
    case ErrorCode::DanglingReference: return "DanglingReference";
    case ErrorCode::RatioOutOfRange: return "RatioOutOfRange";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimTooSmall: return "DimTooSmall";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::MissingPseudoLabels: return "MissingPseudoLabels";
    case ErrorCode::NoLabelsForSplit: return "NoLabelsForSplit";
    case ErrorCode::LabelAccessViolation: return "LabelAccessViolation";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::ParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace laguna
