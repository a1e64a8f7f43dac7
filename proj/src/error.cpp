#include "scmcf/error.hpp"

namespace scmcf {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::CyclicModel: return "CyclicModel";
    case ErrorKind::MissingLaw: return "MissingLaw";
    case ErrorKind::DomainMismatch: return "DomainMismatch";
    case ErrorKind::UnknownVariable: return "UnknownVariable";
    case ErrorKind::DuplicateVariable: return "DuplicateVariable";
    case ErrorKind::IncompleteAssignment: return "IncompleteAssignment";
    case ErrorKind::ValidationError: return "ValidationError";
    case ErrorKind::UnsupportedBackend: return "UnsupportedBackend";
    case ErrorKind::ZeroProbabilityEvidence: return "ZeroProbabilityEvidence";
    case ErrorKind::CounterlegalAntecedent: return "CounterlegalAntecedent";
    case ErrorKind::OverlappingVariables: return "OverlappingVariables";
    case ErrorKind::UnboundedNormalizer: return "UnboundedNormalizer";
    case ErrorKind::Undecidable: return "Undecidable";
    case ErrorKind::InvalidKernel: return "InvalidKernel";
    case ErrorKind::PropertyMismatch: return "PropertyMismatch";
    case ErrorKind::ReservedSymbolCollision: return "ReservedSymbolCollision";
    case ErrorKind::InvalidTask: return "InvalidTask";
    case ErrorKind::FeatureSpaceTooLarge: return "FeatureSpaceTooLarge";
    case ErrorKind::NonInvertibleAtObservation: return "NonInvertibleAtObservation";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::TypeMismatch: return "TypeMismatch";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

}  // namespace scmcf
