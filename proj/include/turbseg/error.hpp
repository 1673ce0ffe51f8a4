#pragma once

#include <stdexcept>
#include <string>

namespace turbseg {

enum class ErrorKind {
  kInput,              // missing/invalid input data or arguments
  kFormat,             // malformed file contents
  kIo,                 // filesystem failures
  kValidation,         // a value violates a type invariant
  kDimensionMismatch,  // grids or frames disagree in size
  kConfig,             // invalid configuration
  kDegenerate,         // degenerate geometry / too few correspondences
  kEstimation,         // a solver could not produce a model
  kInternal,
};

const char *to_string(ErrorKind kind);

// CLI exit code: 2 input, 3 degenerate geometry, 4 internal.
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string &message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

}  // namespace turbseg
