#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace resq {

enum class ErrorKind {
  EmptyInput,
  DegenerateData,
  DimensionMismatch,
  IndexOutOfRange,
  LengthMismatch,
  EmptyHistogram,
  NonFiniteLoss,
  NonFiniteValue,
  InvalidK,
  NonPowerOfTwoK,
  CorruptHeader,
  TruncatedPayload,
  VersionUnsupported,
  ModelStreamMismatch,
  InvalidArgument,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::EmptyInput: return "EmptyInput";
    case ErrorKind::DegenerateData: return "DegenerateData";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::EmptyHistogram: return "EmptyHistogram";
    case ErrorKind::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::NonFiniteValue: return "NonFiniteValue";
    case ErrorKind::InvalidK: return "InvalidK";
    case ErrorKind::NonPowerOfTwoK: return "NonPowerOfTwoK";
    case ErrorKind::CorruptHeader: return "CorruptHeader";
    case ErrorKind::TruncatedPayload: return "TruncatedPayload";
    case ErrorKind::VersionUnsupported: return "VersionUnsupported";
    case ErrorKind::ModelStreamMismatch: return "ModelStreamMismatch";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library. `kind()` is stable and meant for
/// programmatic dispatch; `what()` carries a human-readable message.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message),
        kind_(kind),
        message_(message) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorKind kind_;
  std::string message_;
};

/// Raised by the frame loader; carries the offending frame index.
class NonFiniteValueError : public Error {
 public:
  explicit NonFiniteValueError(std::uint64_t frame_index)
      : Error(ErrorKind::NonFiniteValue,
              "non-finite value at frame " + std::to_string(frame_index)),
        frame_index_(frame_index) {}

  std::uint64_t frame_index() const noexcept { return frame_index_; }

 private:
  std::uint64_t frame_index_;
};

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

inline void require_dim(std::size_t expected, std::size_t actual, std::string_view what) {
  if (expected != actual) {
    throw Error(ErrorKind::DimensionMismatch,
                std::string(what) + ": expected dimension " + std::to_string(expected) +
                    ", got " + std::to_string(actual));
  }
}

}  // namespace resq
