// Copyright 2026 The blindsight Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace blindsight {

enum class ErrorCode {
  kInvalidArgument,
  kUnmatchedMarker,
  kNestedMarker,
  kShapeMismatch,
  kNonFinite,
  kSizeCap,
  kDegenerateReference,
  kIo,
  kAlreadyExists,
  kCaptureFormat,
  kCaptureVersion,
  kCaptureShape,
  kCaptureTruncated,
  kCaptureNonFinite,
  kMixedImageLengths,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace blindsight
