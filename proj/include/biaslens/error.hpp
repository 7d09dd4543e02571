// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace biaslens {

enum class ErrorCode {
  kInvalidArgument,
  kDegenerate,
  kNumeric,
  kSchema,
  kNotFound,
  kSequencing,
  kLoad,
  kTooLarge,
};

std::string_view to_string(ErrorCode code);

// Every failure surfaced by the library. `detail` carries machine-oriented
// context (row/column, offending value) and is echoed in service responses.
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

}  // namespace biaslens
