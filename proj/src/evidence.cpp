#include "evidence.hpp"

#include <cmath>

#include "scmcf/error.hpp"

namespace scmcf::detail {

bool SlotEvidence::holds(std::span<const double> slots) const {
  for (const auto& [slot, value] : items)
    if (std::abs(slots[slot] - value) > kValueTolerance) return false;
  return true;
}

SlotEvidence resolve_evidence(const CausalModel& model, const Assignment& evidence,
                              EvidenceScope scope, const std::string& role) {
  SlotEvidence out;
  for (const auto& [name, value] : evidence) {
    auto kind = model.kind_of(name);
    if (!kind) throw Error(ErrorKind::UnknownVariable, role + " names unknown variable '" + name + "'");
    if (scope == EvidenceScope::Endogenous && *kind == VariableKind::Exogenous)
      throw Error(ErrorKind::ValidationError, role + " must name endogenous variables, not '" + name + "'");
    const Domain& d = model.domain(name);
    if (!d.contains(value))
      throw Error(ErrorKind::DomainMismatch,
                  role + ": " + format_number(value) + " is outside the domain of '" + name + "'");
    if (d.kind() != Domain::Kind::Finite) out.finite = false;
    out.items.emplace_back(model.slot_of(name), d.snap(value));
  }
  return out;
}

void require_endogenous(const CausalModel& model, const std::vector<std::string>& names,
                        const std::string& role) {
  for (const auto& name : names) {
    auto kind = model.kind_of(name);
    if (!kind) throw Error(ErrorKind::UnknownVariable, role + " names unknown variable '" + name + "'");
    if (*kind == VariableKind::Exogenous)
      throw Error(ErrorKind::ValidationError, role + " must name endogenous variables, not '" + name + "'");
  }
}

LinearConstraint affine_constraints(const CausalModel& model, const AffineReducedForm& form,
                                    const Assignment& evidence) {
  const auto m = static_cast<Eigen::Index>(model.exogenous().size());
  const auto k = static_cast<Eigen::Index>(evidence.size());
  LinearConstraint c{Eigen::MatrixXd::Zero(k, m), Eigen::VectorXd::Zero(k)};
  Eigen::Index i = 0;
  for (const auto& [name, value] : evidence) {
    if (auto u = model.exogenous_index(name)) {
      c.C(i, static_cast<Eigen::Index>(*u)) = 1.0;
      c.d(i) = value;
    } else {
      auto v = static_cast<Eigen::Index>(*model.endogenous_index(name));
      c.C.row(i) = form.A.row(v);
      c.d(i) = value - form.b(v);
    }
    ++i;
  }
  return c;
}

GaussianDistribution ordered_gaussian(const CausalModel& model, const Distribution& prior) {
  std::vector<std::string> names;
  for (const auto& d : model.exogenous()) names.push_back(d.name);
  return reorder(prior, names).gaussian();
}

}  // namespace scmcf::detail
