#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

#include "freeform/vec.hpp"

namespace freeform {

enum class ErrorCode {
  InvalidInput,
  TotalInternalReflection,
  DomainError,
  NotConservative,
  CurlViolation,
  CompatibilityViolation,
  NonpositiveThickness,
  NoIntersection,
  MultipleGrazing,
  NonpositiveLambda,
  SingularPhi,
  NotCollimated,
  DegenerateDirection,
  BoundViolation,
  PathInconsistency,
  InitialConditionOutOfWindow,
  DomainCollapse,
  NonInvertibleMap,
  BranchCrossing,
  NonMonotone,
  DegenerateMagnification,
  Infeasible,
  Miss,
  ConfigError,
  IoError,
};

/// Stable machine-readable name, e.g. "CURL_VIOLATION".
std::string_view code_name(ErrorCode code);

/// Which stage a failure belongs to; drives the CLI exit status.
enum class ErrorClass { Input, Condition, Solver, Io };
ErrorClass classify(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(code_name(code)) + ": " + message), code_(code) {}

  Error(ErrorCode code, const std::string& message, Vec2 where, double margin)
      : Error(code, message) {
    where_ = where;
    margin_ = margin;
  }

  ErrorCode code() const { return code_; }
  /// Worst offending point, when the failure is a grid-wide condition.
  const std::optional<Vec2>& where() const { return where_; }
  const std::optional<double>& margin() const { return margin_; }

 private:
  ErrorCode code_;
  std::optional<Vec2> where_;
  std::optional<double> margin_;
};

}  // namespace freeform
