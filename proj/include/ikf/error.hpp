#pragma once

#include <stdexcept>
#include <string>

namespace ikf {

enum class ErrorCode {
  DimensionMismatch,
  SingularCovariance,
  SingularInnovation,
  SingularPrior,
  SingularDenominator,
  MissingBelief,
  NonMonotoneTime,
  HorizonExceeded,
  UnknownNode,
  UnknownSensor,
  DuplicateId,
  DomainError,
  EmptyInput,
  ZeroVariance,
  Divergence,
  UnstableDynamics,
  Unreachable,
  ConfigError,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

}  // namespace ikf
