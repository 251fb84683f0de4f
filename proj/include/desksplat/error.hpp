#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace desksplat {

enum class ErrorCode {
  kInvalidDepth,
  kBehindCamera,
  kInsufficientCorrespondences,
  kDegenerateGeometry,
  kEmptyMatchSet,
  kEmptyPointSet,
  kShapeError,
  kEmptyKeyframeSet,
  kInsufficientOverlap,
  kWindowError,
  kDatasetError,
  kIoError,
  kInvalidArgument,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidDepth: return "InvalidDepth";
    case ErrorCode::kBehindCamera: return "BehindCamera";
    case ErrorCode::kInsufficientCorrespondences: return "InsufficientCorrespondences";
    case ErrorCode::kDegenerateGeometry: return "DegenerateGeometry";
    case ErrorCode::kEmptyMatchSet: return "EmptyMatchSet";
    case ErrorCode::kEmptyPointSet: return "EmptyPointSet";
    case ErrorCode::kShapeError: return "ShapeError";
    case ErrorCode::kEmptyKeyframeSet: return "EmptyKeyframeSet";
    case ErrorCode::kInsufficientOverlap: return "InsufficientOverlap";
    case ErrorCode::kWindowError: return "WindowError";
    case ErrorCode::kDatasetError: return "DatasetError";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace desksplat
