#include "hsim/error.hpp"

namespace hsim {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::ZeroVector: return "ZeroVector";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::OutsideBall: return "OutsideBall";
    case ErrorKind::EmptyClass: return "EmptyClass";
    case ErrorKind::EmptyBatch: return "EmptyBatch";
    case ErrorKind::StaleMarginTable: return "StaleMarginTable";
    case ErrorKind::TooFewClasses: return "TooFewClasses";
    case ErrorKind::MissingCache: return "MissingCache";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::UnsatisfiableBatchSpec: return "UnsatisfiableBatchSpec";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::MalformedFile: return "MalformedFile";
    case ErrorKind::InconsistentDimensions: return "InconsistentDimensions";
    case ErrorKind::UnknownMagic: return "UnknownMagic";
    case ErrorKind::KTooLarge: return "KTooLarge";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace hsim
