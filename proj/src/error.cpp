#include "scalechain/error.hpp"

namespace scalechain {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kMalformedHeader: return "MalformedHeader";
    case ErrorCode::kUnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::kOddDimensions: return "OddDimensions";
    case ErrorCode::kIndivisibleDimensions: return "IndivisibleDimensions";
    case ErrorCode::kTruncated: return "Truncated";
    case ErrorCode::kMissingFrameMarker: return "MissingFrameMarker";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::kGeometryMismatch: return "GeometryMismatch";
    case ErrorCode::kTooFewPoints: return "TooFewPoints";
    case ErrorCode::kNoOverlap: return "NoOverlap";
    case ErrorCode::kNonMonotone: return "NonMonotone";
    case ErrorCode::kMissingWeights: return "MissingWeights";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kExternalTool: return "ExternalTool";
    case ErrorCode::kConfig: return "Config";
  }
  return "Unknown";
}

ErrorCategory category_of(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kConfig:
      return ErrorCategory::kUsage;
    case ErrorCode::kExternalTool:
      return ErrorCategory::kExternal;
    default:
      return ErrorCategory::kData;
  }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace scalechain
