#include "ikf/error.hpp"

namespace ikf {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::SingularInnovation: return "SingularInnovation";
    case ErrorCode::SingularPrior: return "SingularPrior";
    case ErrorCode::SingularDenominator: return "SingularDenominator";
    case ErrorCode::MissingBelief: return "MissingBelief";
    case ErrorCode::NonMonotoneTime: return "NonMonotoneTime";
    case ErrorCode::HorizonExceeded: return "HorizonExceeded";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::UnknownSensor: return "UnknownSensor";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::ZeroVariance: return "ZeroVariance";
    case ErrorCode::Divergence: return "Divergence";
    case ErrorCode::UnstableDynamics: return "UnstableDynamics";
    case ErrorCode::Unreachable: return "Unreachable";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace ikf
