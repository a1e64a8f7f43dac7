#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scmcf/backtracking.hpp"
#include "scmcf/kernel.hpp"
#include "scmcf/model.hpp"
#include "scmcf/probability.hpp"

namespace scmcf {

/// A predictor Y = f(X) living inside the model, a factual (x, y) and the
/// label y* we would like to have seen.
struct ExplanationTask {
  CausalModel model;
  BacktrackingConditional kernel;
  std::vector<std::string> features;  // X
  std::string target;                 // Y
  Assignment factual;                 // values for every feature and the target
  double desired = 0.0;               // y*
};

/// Throws InvalidTask if the target's law reads anything but features, if the
/// factual assignment is incomplete or inconsistent with the law, or if y* is
/// outside the target's domain.
void validate(const ExplanationTask& task);

/// Most probable x* (starred names) under the backtracking posterior given
/// Y* = y* and the factual (x, y). Real-valued posteriors give their mean.
/// Ties go to the first assignment in declaration-lexicographic order.
Assignment map_explanation(const ExplanationTask& task, const EngineOptions& options = {});

struct SparseExplanation {
  std::vector<std::string> subset;  // Z, in feature order
  Assignment values;                // z*, starred names
  double score = 0.0;
};

/// Every nonempty Z with |Z| <= k and values z* that change every feature of
/// Z, scored by the posterior mass of "exactly Z changed, to z*". Sorted by
/// score (descending), |Z|, then feature order. Only scores above alpha are kept.
/// Errors: FeatureSpaceTooLarge beyond 20 features; UnsupportedBackend for
/// real-valued features.
std::vector<SparseExplanation> sparse_explanations(const ExplanationTask& task, std::size_t k, double alpha,
                                                   const EngineOptions& options = {});

/// The posterior mass of "no feature changed", i.e. what the explanations of
/// sparse_explanations leave out when k covers every feature.
double unchanged_mass(const ExplanationTask& task, const EngineOptions& options = {});

/// MAP over z* with the remaining features held at their factual values and
/// every feature of Z strictly changed.
/// Errors: CounterlegalAntecedent when y* cannot be reached by changing Z alone.
Assignment fixed_remainder_explanation(const ExplanationTask& task, const std::vector<std::string>& subset,
                                       const EngineOptions& options = {});

/// Monotone transform used to compare outlier severity.
struct Calibration {
  enum class Kind { Identity, Negate, Exp, Affine };
  Kind kind = Kind::Identity;
  double a = 1.0, b = 0.0;  // Affine: a * y + b, a != 0

  double operator()(double y) const;
  bool increasing() const;
};

struct AttributionTask {
  CausalModel model;
  Distribution prior;
  std::string target;
  Assignment observation;  // endogenous values of the outlier
  Calibration tau;
};

/// P(tau(Y*) >= tau(y) | U*_S = u_S, U = u) with U* drawn from the prior, u the
/// unique world behind the observation.
/// Errors: NonInvertibleAtObservation; UnknownVariable for names outside U.
double attribution_score(const AttributionTask& task, const std::vector<std::string>& subset,
                         const EngineOptions& options = {});

struct ShapleyAttribution {
  std::vector<std::string> variables;  // exogenous, declaration order
  std::vector<double> values;
  std::size_t permutations = 0;
  bool approximate = true;
};

/// Average marginal contribution of each exogenous variable to the
/// attribution score over `permutations` seeded random orderings.
ShapleyAttribution shapley_attribution(const AttributionTask& task, std::size_t permutations = 200,
                                       std::uint64_t seed = 0, const EngineOptions& options = {});

}  // namespace scmcf
