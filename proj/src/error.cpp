#include "turbseg/error.hpp"

namespace turbseg {

const char *to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInput: return "input error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kIo: return "I/O error";
    case ErrorKind::kValidation: return "validation error";
    case ErrorKind::kDimensionMismatch: return "dimension mismatch";
    case ErrorKind::kConfig: return "configuration error";
    case ErrorKind::kDegenerate: return "degenerate geometry";
    case ErrorKind::kEstimation: return "estimation error";
    case ErrorKind::kInternal: return "internal error";
  }
  return "unknown error";
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDegenerate:
    case ErrorKind::kEstimation:
      return 3;
    case ErrorKind::kInternal:
      return 4;
    default:
      return 2;
  }
}

}  // namespace turbseg
