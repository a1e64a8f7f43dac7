#pragma once

#include <map>
#include <string>
#include <vector>

#include "scmcf/backtracking.hpp"
#include "scmcf/kernel.hpp"
#include "scmcf/model.hpp"
#include "scmcf/probability.hpp"

namespace scmcf {

/// Label of the observational regime. Regime variables store an index:
/// 0 is `obs`, i > 0 clamps the variable to levels[i - 1].
inline constexpr const char* kObsLabel = "obs";

struct RegimeVariable {
  std::string variable;  // the endogenous variable it switches
  std::string name;      // "R_" + variable
  std::vector<double> levels;
  Domain domain;         // labelled {obs, levels...}

  /// Index of `value` among the levels plus one, or nullopt.
  std::optional<std::size_t> index_of_level(double value) const;
  double level(std::size_t index) const { return levels.at(index - 1); }
};

class AugmentedModel {
 public:
  const CausalModel& base() const noexcept { return base_; }
  /// Exogenous set U followed by the regime variables, laws switched on them.
  const CausalModel& augmented() const noexcept { return augmented_; }
  const std::vector<RegimeVariable>& regimes() const noexcept { return regimes_; }
  const RegimeVariable& regime_for(const std::string& variable) const;
  std::vector<std::string> regime_names() const;

  /// The base model with every non-observational regime applied as do().
  CausalModel under(const std::vector<std::size_t>& regime_indices) const;

 private:
  friend AugmentedModel augment(const CausalModel&, const std::map<std::string, std::vector<double>>&);
  CausalModel base_;
  CausalModel augmented_;
  std::vector<RegimeVariable> regimes_;
};

/// Finite variables take their whole domain as levels. Real-valued ones only
/// get the levels listed in `levels`; extra entries for finite variables must
/// lie in the domain.
/// Errors: ReservedSymbolCollision, UnknownVariable, DomainMismatch.
AugmentedModel augment(const CausalModel& model,
                       const std::map<std::string, std::vector<double>>& levels = {});

/// Point mass on all-obs over the regime variables.
Distribution default_observational_regime_prior(const AugmentedModel& aug);

/// Counterfactual regime kernel: R*_i keeps R_i with probability 1 - flip[i]
/// and otherwise moves uniformly to one of the other regime values.
struct RegimeKernel {
  std::map<std::string, double> flip;  // by endogenous variable name; absent means 0
};

/// Regime clause per endogenous variable: a level value, or nullopt for obs.
using RegimeClauses = std::map<std::string, std::optional<double>>;

struct UnifiedQuery {
  RegimeClauses factual_regimes;
  RegimeClauses counterfactual_regimes;
  Assignment evidence;        // factual endogenous evidence
  Assignment counterfactual;  // starred endogenous evidence
  std::vector<std::string> targets;  // endogenous names, or regime names on finite models
};

struct UnifiedResult {
  Distribution distribution;  // over starred targets
  std::string provenance;
  std::size_t configurations = 0;  // regime configurations with positive weight
  std::vector<std::string> diagnostics;
};

/// Backtracking on (U, R): P(U) P(R) K(U*|U) K_R(R*|R), with regime clauses
/// clamping the corresponding factor to a point mass.
/// Errors: as the backtracking engine; UnsupportedBackend when a real-valued
/// model would need more than one regime configuration.
UnifiedResult unified_counterfactual(const AugmentedModel& aug, const BacktrackingConditional& kernel,
                                     const Distribution& regime_prior, const RegimeKernel& regime_kernel,
                                     const UnifiedQuery& query, const EngineOptions& options = {});

}  // namespace scmcf
