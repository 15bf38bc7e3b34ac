#pragma once

#include <stdexcept>
#include <string>

namespace hsim {

enum class ErrorKind {
  ZeroVector,
  DimensionMismatch,
  NonFinite,
  OutsideBall,
  EmptyClass,
  EmptyBatch,
  StaleMarginTable,
  TooFewClasses,
  MissingCache,
  ShapeMismatch,
  UnsatisfiableBatchSpec,
  InvalidSpec,
  MalformedFile,
  InconsistentDimensions,
  UnknownMagic,
  KTooLarge,
  IndexOutOfRange,
  InvalidConfig,
  Io,
};

const char* to_string(ErrorKind kind) noexcept;

// All library failures are reported through this one exception type; callers
// that need to branch on the failure inspect kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind), detail_(what) {}

  ErrorKind kind() const noexcept { return kind_; }
  // Message without the kind prefix, for rewrapping.
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorKind kind_;
  std::string detail_;
};

}  // namespace hsim
