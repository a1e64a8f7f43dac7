#pragma once

#include <Eigen/Dense>
#include <initializer_list>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scmcf/domain.hpp"
#include "scmcf/error.hpp"
#include "scmcf/expression.hpp"

namespace scmcf {

enum class VariableKind { Exogenous, Endogenous };

struct VariableDecl {
  std::string name;
  Domain domain;

  bool operator==(const VariableDecl&) const = default;
};

struct StructuralLaw {
  std::string target;
  Expression function;

  bool operator==(const StructuralLaw&) const = default;
};

/// Variable name to value map that remembers insertion order. Equality
/// ignores order.
class Assignment {
 public:
  using Entry = std::pair<std::string, double>;

  Assignment() = default;
  Assignment(std::initializer_list<Entry> entries);

  /// Inserts or overwrites.
  void set(const std::string& name, double value);
  std::optional<double> get(const std::string& name) const;
  /// Throws UnknownVariable if absent.
  double at(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }
  std::vector<std::string> names() const;

  bool operator==(const Assignment& other) const;

 private:
  std::vector<Entry> entries_;
};

std::string to_string(const Assignment& a);

class CausalModel {
 public:
  CausalModel() = default;
  CausalModel(std::vector<VariableDecl> exogenous, std::vector<VariableDecl> endogenous,
              std::vector<StructuralLaw> laws);

  const std::vector<VariableDecl>& exogenous() const noexcept { return exogenous_; }
  const std::vector<VariableDecl>& endogenous() const noexcept { return endogenous_; }
  /// Laws in the order they were given.
  const std::vector<StructuralLaw>& laws() const noexcept { return laws_; }

  bool valid() const noexcept { return !error_kind_; }
  /// Throws the first violated invariant.
  void validate() const;

  const VariableDecl* find(const std::string& name) const;
  std::optional<VariableKind> kind_of(const std::string& name) const;
  const Domain& domain(const std::string& name) const;
  const StructuralLaw& law_for(const std::string& target) const;
  std::optional<std::size_t> exogenous_index(const std::string& name) const;
  std::optional<std::size_t> endogenous_index(const std::string& name) const;

  /// Endogenous parents and exogenous noises of a law, in first-reference order.
  std::vector<std::string> parents(const std::string& target) const;
  std::vector<std::string> noises(const std::string& target) const;

  std::vector<std::string> topological_order() const;

  Assignment solve(const Assignment& u) const;

  /// Slot layout is [exogenous..., endogenous...] in declaration order.
  /// The caller fills the exogenous prefix; the endogenous tail is written.
  std::size_t slot_count() const noexcept { return exogenous_.size() + endogenous_.size(); }
  std::size_t slot_of(const std::string& name) const;
  void solve_slots(std::span<double> slots) const;

  CausalModel submodel(const Assignment& x) const;

  std::set<std::string> ancestors(const std::vector<std::string>& targets) const;
  /// Endogenous variables reachable from `roots` along law edges, roots included.
  std::set<std::string> descendants(const std::vector<std::string>& roots) const;

  bool all_finite() const;

  bool operator==(const CausalModel& other) const;

 private:
  void check();
  void compile();
  void require_valid() const;

  std::vector<VariableDecl> exogenous_;
  std::vector<VariableDecl> endogenous_;
  std::vector<StructuralLaw> laws_;

  std::optional<ErrorKind> error_kind_;
  std::string error_message_;

  std::vector<std::size_t> law_of_;  // endogenous index -> laws_ index
  std::vector<std::size_t> order_;   // endogenous indices, topological
  std::vector<CompiledExpression> compiled_;  // per endogenous index
};

/// V = A U + b over the model's declaration orders.
struct AffineReducedForm {
  std::vector<std::string> exogenous;
  std::vector<std::string> endogenous;
  Eigen::MatrixXd A;
  Eigen::VectorXd b;
};

/// Available whenever every law is affine and every variable lives on the
/// real line.
std::optional<AffineReducedForm> affine_reduced_form(const CausalModel& model);

struct LinearGaussianCheck {
  bool compatible = false;
  std::string reason;
  AffineReducedForm form;
};

/// Affine laws in which each law carries at most one exogenous term with unit
/// coefficient and no exogenous variable feeds more than one law.
LinearGaussianCheck is_linear_additive_gaussian_compatible(const CausalModel& model);

}  // namespace scmcf
