#pragma once

#include <stdexcept>
#include <string>

namespace maptag {

enum class ErrorCode {
  MissingField,
  MalformedHeader,
  TruncatedData,
  InvalidPoint,
  IoFailure,
  EmptyCloud,
  DegenerateNeighborhood,
  DegenerateCluster,
  EmptySelection,
  DegenerateImage,
  TooFewPixels,
  FrameCheckFailed,
  AmbiguousMatch,
  DegenerateVertices,
  PlanarityViolation,
  InvalidSpec,
  InvalidConfig,
  InvalidDictionary,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::MalformedHeader: return "MalformedHeader";
    case ErrorCode::TruncatedData: return "TruncatedData";
    case ErrorCode::InvalidPoint: return "InvalidPoint";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::EmptyCloud: return "EmptyCloud";
    case ErrorCode::DegenerateNeighborhood: return "DegenerateNeighborhood";
    case ErrorCode::DegenerateCluster: return "DegenerateCluster";
    case ErrorCode::EmptySelection: return "EmptySelection";
    case ErrorCode::DegenerateImage: return "DegenerateImage";
    case ErrorCode::TooFewPixels: return "TooFewPixels";
    case ErrorCode::FrameCheckFailed: return "FrameCheckFailed";
    case ErrorCode::AmbiguousMatch: return "AmbiguousMatch";
    case ErrorCode::DegenerateVertices: return "DegenerateVertices";
    case ErrorCode::PlanarityViolation: return "PlanarityViolation";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::InvalidDictionary: return "InvalidDictionary";
  }
  return "Unknown";
}

/// Every failure raised by the library carries a machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace maptag
