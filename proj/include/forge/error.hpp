#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace forge {

enum class ErrorCode {
  kMalformed,
  kInvalidBBox,
  kOutOfBounds,
  kDuplicateId,
  kMissingField,
  kUnknownField,
  kMissingCaption,
  kMissingObjects,
  kUnbalancedList,
  kInvalidJson,
  kMissingKey,
  kUnknownLabel,
  kEmptyCaption,
  kDimensionMismatch,
  kZeroVector,
  kMissingBinding,
  kUnusedBinding,
  kInvalidBinding,
  kDegenerateBox,
  kEmptyRegion,
  kAmbiguousRelation,
  kUnverifiedRecord,
  kTransport,
  kExhaustedRetries,
  kUnparseableResponse,
  kCorrelationMismatch,
  kMissingArtifact,
  kUnconfiguredProvider,
  kMissingFixture,
  kUndecodableRaster,
  kInvalidConfig,
  kIo,
  kCheckpointMismatch,
  kUnsatisfiableLayout,
  kInterrupted,
};

std::string_view to_string(ErrorCode code);

/// Base error for everything the engine throws. The code classifies the
/// failure so callers can route it (drop, quarantine, abort) without parsing
/// messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Transient transport failure; the only error class that retry loops retry.
class TransportError : public Error {
 public:
  explicit TransportError(const std::string& message)
      : Error(ErrorCode::kTransport, message) {}
};

}  // namespace forge
