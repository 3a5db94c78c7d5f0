#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace tilerecon {

enum class ErrorCode {
  kMissingFile,
  kTruncatedRecord,
  kUnknownCameraModel,
  kParseError,
  kIoFailure,
  kIntegrityViolation,
  kInvalidArgument,
  kEmptyAfterFilter,
  kDegenerateBounds,
  kDegenerateRay,
  kBehindCamera,
  kUnsupportedCamera,
  kNoVisibleGroup,
  kNoPositiveScore,
  kOutOfSourceFrustum,
  kInvalidSourceDepth,
  kZeroNormal,
  kNonFinite,
  kEmptyVolume,
  kNoOverlap,
  kDegenerateGeometry,
  kEmptyMesh,
  kDimensionMismatch,
  kUnknownFlag,
  kMissingRequired,
  kInvalidValue,
  kDegenerateSpec,
};

inline const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMissingFile: return "MissingFile";
    case ErrorCode::kTruncatedRecord: return "TruncatedRecord";
    case ErrorCode::kUnknownCameraModel: return "UnknownCameraModel";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kIoFailure: return "IoFailure";
    case ErrorCode::kIntegrityViolation: return "IntegrityViolation";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kEmptyAfterFilter: return "EmptyAfterFilter";
    case ErrorCode::kDegenerateBounds: return "DegenerateBounds";
    case ErrorCode::kDegenerateRay: return "DegenerateRay";
    case ErrorCode::kBehindCamera: return "BehindCamera";
    case ErrorCode::kUnsupportedCamera: return "UnsupportedCamera";
    case ErrorCode::kNoVisibleGroup: return "NoVisibleGroup";
    case ErrorCode::kNoPositiveScore: return "NoPositiveScore";
    case ErrorCode::kOutOfSourceFrustum: return "OutOfSourceFrustum";
    case ErrorCode::kInvalidSourceDepth: return "InvalidSourceDepth";
    case ErrorCode::kZeroNormal: return "ZeroNormal";
    case ErrorCode::kNonFinite: return "NonFinite";
    case ErrorCode::kEmptyVolume: return "EmptyVolume";
    case ErrorCode::kNoOverlap: return "NoOverlap";
    case ErrorCode::kDegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::kEmptyMesh: return "EmptyMesh";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kUnknownFlag: return "UnknownFlag";
    case ErrorCode::kMissingRequired: return "MissingRequired";
    case ErrorCode::kInvalidValue: return "InvalidValue";
    case ErrorCode::kDegenerateSpec: return "DegenerateSpec";
  }
  return "Unknown";
}

// Every failure surfaced by the library. The code is the contract; the message
// is for humans. Parsers attach the byte offset of the failing record.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::uint64_t> offset = std::nullopt)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + message),
        code_(code),
        offset_(offset) {}

  ErrorCode code() const { return code_; }
  std::optional<std::uint64_t> offset() const { return offset_; }

 private:
  ErrorCode code_;
  std::optional<std::uint64_t> offset_;
};

[[noreturn]] inline void Fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

#define TILERECON_CHECK(cond, code, message)        \
  do {                                              \
    if (!(cond)) ::tilerecon::Fail((code), (message)); \
  } while (0)

}  // namespace tilerecon
