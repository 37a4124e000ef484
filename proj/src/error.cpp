#include "gbdtbp/error.hpp"

namespace gbdtbp {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::NonFiniteResult: return "NonFiniteResult";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::InvalidOneHot: return "InvalidOneHot";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidK: return "InvalidK";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

}  // namespace gbdtbp
