#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace scmcf {

enum class ErrorKind {
  // model structure
  CyclicModel,
  MissingLaw,
  DomainMismatch,
  UnknownVariable,
  DuplicateVariable,
  IncompleteAssignment,
  ValidationError,
  // probability / engines
  UnsupportedBackend,
  ZeroProbabilityEvidence,
  CounterlegalAntecedent,
  OverlappingVariables,
  // backtracking conditionals
  UnboundedNormalizer,
  Undecidable,
  InvalidKernel,
  PropertyMismatch,
  // unified semantics
  ReservedSymbolCollision,
  // explanations
  InvalidTask,
  FeatureSpaceTooLarge,
  NonInvertibleAtObservation,
  // text formats
  ParseError,
  TypeMismatch,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the library carries one of the kinds above so
/// callers (and the CLI exit-code mapping) can branch on it.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace scmcf
