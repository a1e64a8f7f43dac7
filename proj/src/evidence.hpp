#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scmcf/model.hpp"
#include "scmcf/probability.hpp"

namespace scmcf::detail {

// Evidence resolved to solve_slots positions.
struct SlotEvidence {
  std::vector<std::pair<std::size_t, double>> items;
  bool finite = true;  // every variable has a finite domain

  bool holds(std::span<const double> slots) const;
};

enum class EvidenceScope { Endogenous, Any };

// Checks names (UnknownVariable, ValidationError for exogenous names when the
// scope is Endogenous) and values (DomainMismatch).
SlotEvidence resolve_evidence(const CausalModel& model, const Assignment& evidence,
                              EvidenceScope scope, const std::string& role);

void require_endogenous(const CausalModel& model, const std::vector<std::string>& names,
                        const std::string& role);

// Rows C u = d over the model's exogenous variables, one per evidence item.
LinearConstraint affine_constraints(const CausalModel& model, const AffineReducedForm& form,
                                    const Assignment& evidence);

// Gaussian prior with variables in the model's exogenous order.
GaussianDistribution ordered_gaussian(const CausalModel& model, const Distribution& prior);

}  // namespace scmcf::detail
