#include "freeform/error.hpp"

namespace freeform {

std::string_view code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidInput: return "INVALID_INPUT";
    case ErrorCode::TotalInternalReflection: return "TOTAL_INTERNAL_REFLECTION";
    case ErrorCode::DomainError: return "DOMAIN_ERROR";
    case ErrorCode::NotConservative: return "NOT_CONSERVATIVE";
    case ErrorCode::CurlViolation: return "CURL_VIOLATION";
    case ErrorCode::CompatibilityViolation: return "COMPATIBILITY_VIOLATION";
    case ErrorCode::NonpositiveThickness: return "NONPOSITIVE_THICKNESS";
    case ErrorCode::NoIntersection: return "NO_INTERSECTION";
    case ErrorCode::MultipleGrazing: return "MULTIPLE_GRAZING";
    case ErrorCode::NonpositiveLambda: return "NONPOSITIVE_LAMBDA";
    case ErrorCode::SingularPhi: return "SINGULAR_PHI";
    case ErrorCode::NotCollimated: return "NOT_COLLIMATED";
    case ErrorCode::DegenerateDirection: return "DEGENERATE_DIRECTION";
    case ErrorCode::BoundViolation: return "BOUND_VIOLATION";
    case ErrorCode::PathInconsistency: return "PATH_INCONSISTENCY";
    case ErrorCode::InitialConditionOutOfWindow: return "INITIAL_CONDITION_OUT_OF_WINDOW";
    case ErrorCode::DomainCollapse: return "DOMAIN_COLLAPSE";
    case ErrorCode::NonInvertibleMap: return "NON_INVERTIBLE_MAP";
    case ErrorCode::BranchCrossing: return "BRANCH_CROSSING";
    case ErrorCode::NonMonotone: return "NON_MONOTONE";
    case ErrorCode::DegenerateMagnification: return "DEGENERATE_MAGNIFICATION";
    case ErrorCode::Infeasible: return "INFEASIBLE";
    case ErrorCode::Miss: return "MISS";
    case ErrorCode::ConfigError: return "CONFIG_ERROR";
    case ErrorCode::IoError: return "IO_ERROR";
  }
  return "UNKNOWN";
}

ErrorClass classify(ErrorCode code) {
  switch (code) {
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidInput:
      return ErrorClass::Input;
    case ErrorCode::IoError:
      return ErrorClass::Io;
    case ErrorCode::TotalInternalReflection:
    case ErrorCode::NotConservative:
    case ErrorCode::CurlViolation:
    case ErrorCode::CompatibilityViolation:
    case ErrorCode::NonpositiveThickness:
    case ErrorCode::NonpositiveLambda:
    case ErrorCode::NotCollimated:
    case ErrorCode::DegenerateDirection:
    case ErrorCode::BoundViolation:
    case ErrorCode::InitialConditionOutOfWindow:
    case ErrorCode::NonInvertibleMap:
    case ErrorCode::BranchCrossing:
    case ErrorCode::DegenerateMagnification:
    case ErrorCode::Infeasible:
    case ErrorCode::DomainError:
      return ErrorClass::Condition;
    case ErrorCode::NoIntersection:
    case ErrorCode::MultipleGrazing:
    case ErrorCode::SingularPhi:
    case ErrorCode::PathInconsistency:
    case ErrorCode::DomainCollapse:
    case ErrorCode::NonMonotone:
    case ErrorCode::Miss:
      return ErrorClass::Solver;
  }
  return ErrorClass::Solver;
}

}  // namespace freeform
