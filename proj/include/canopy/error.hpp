#pragma once

#include <stdexcept>
#include <string>

namespace canopy {

enum class ErrorKind {
  InvalidArgument,
  EmptyInput,
  MalformedInput,
  OutOfCoverage,
  AlgorithmDivergence,
  SaturatedOcclusion,
  PlacementFailure,
  Io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::EmptyInput: return "empty-input";
    case ErrorKind::MalformedInput: return "malformed-input";
    case ErrorKind::OutOfCoverage: return "out-of-coverage";
    case ErrorKind::AlgorithmDivergence: return "algorithm-divergence";
    case ErrorKind::SaturatedOcclusion: return "saturated-occlusion";
    case ErrorKind::PlacementFailure: return "placement-failure";
    case ErrorKind::Io: return "io-error";
  }
  return "unknown";
}

// Every failure raised by the library carries a kind so the CLI can map it
// onto an exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Exit codes: 2 invalid arguments, 3 malformed input data, 4 divergence.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument:
    case ErrorKind::SaturatedOcclusion:
      return 2;
    case ErrorKind::EmptyInput:
    case ErrorKind::MalformedInput:
    case ErrorKind::OutOfCoverage:
      return 3;
    case ErrorKind::AlgorithmDivergence:
    case ErrorKind::PlacementFailure:
      return 4;
    case ErrorKind::Io:
      return 1;
  }
  return 1;
}

}  // namespace canopy
