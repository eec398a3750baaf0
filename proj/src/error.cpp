#include "fhtriage/error.hpp"

namespace fhtriage {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidParameter: return "InvalidParameter";
    case ErrorCode::EmptyCorpus: return "EmptyCorpus";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::KindMismatch: return "KindMismatch";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::UndefinedModularity: return "UndefinedModularity";
    case ErrorCode::MissingLabel: return "MissingLabel";
    case ErrorCode::DuplicateSample: return "DuplicateSample";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace fhtriage
