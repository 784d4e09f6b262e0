#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace scalechain {

enum class ErrorCode {
  kInvalidArgument,
  kMalformedHeader,
  kUnsupportedFormat,
  kOddDimensions,
  kIndivisibleDimensions,
  kTruncated,
  kMissingFrameMarker,
  kShapeMismatch,
  kBadMagic,
  kChecksumMismatch,
  kGeometryMismatch,
  kTooFewPoints,
  kNoOverlap,
  kNonMonotone,
  kMissingWeights,
  kIo,
  kExternalTool,
  kConfig,
};

std::string_view to_string(ErrorCode code);

// Category used by the command line tool to pick an exit status.
enum class ErrorCategory { kUsage, kData, kExternal };

ErrorCategory category_of(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace scalechain
