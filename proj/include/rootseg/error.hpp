#pragma once

#include <stdexcept>
#include <string>

namespace rootseg {

enum class ErrorCode {
  kBadMagic,
  kTruncated,
  kDimOverflow,
  kUnknownDtype,
  kTrailingBytes,
  kIo,
  kShape,
  kInvalidArgument,
  kConfig,
};

const char* to_string(ErrorCode code);

/// Data, format or configuration error. The message names the offending field.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace rootseg
