#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gbdtbp {

enum class ErrorCode {
  SingularSystem,
  NonFiniteInput,
  NonFiniteResult,
  DimensionMismatch,
  EmptyInput,
  InvalidOneHot,
  InvalidArgument,
  InvalidK,
  ParseError,
  NonFiniteLoss,
  VersionMismatch,
  ConfigError,
  IoError,
};

std::string_view error_code_name(ErrorCode code);

// Every failure raised by the library carries a machine-readable code so the
// CLI can print a structured error line.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace gbdtbp
