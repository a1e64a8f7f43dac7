#pragma once

#include <string>
#include <vector>

#include "scmcf/kernel.hpp"
#include "scmcf/model.hpp"
#include "scmcf/probability.hpp"

namespace scmcf {

struct BacktrackingQuery {
  Assignment evidence;        // factual world
  Assignment counterfactual;  // antecedent, read in the starred world
  std::vector<std::string> targets;
};

struct CrossWorldPosterior {
  Distribution joint;          // over (U..., U*...)
  Distribution marginal_star;  // over U*
  std::string provenance;      // "exact", "gaussian" or "importance"
  std::vector<std::string> diagnostics;
};

/// P_B(y*, z): mass of world pairs with Y*(u*) = y* and Z(u) = z. The kernel
/// carries the prior it was bound to.
double backtracking_joint_probability(const CausalModel& model, const BacktrackingConditional& kernel,
                                      const Assignment& y_star, const Assignment& z,
                                      const EngineOptions& options = {});

/// P(U, U* | X*(u*) = x*, Z(u) = z).
/// Errors: ZeroProbabilityEvidence (factual), CounterlegalAntecedent.
CrossWorldPosterior cross_world_abduction(const CausalModel& model, const BacktrackingConditional& kernel,
                                          const Assignment& x_star, const Assignment& z,
                                          const EngineOptions& options = {});

/// Posterior over the starred targets, predicted with the unmodified laws.
Distribution backtracking_counterfactual(const CausalModel& model, const BacktrackingConditional& kernel,
                                         const BacktrackingQuery& query, const EngineOptions& options = {});

/// Most probable counterfactual world; ties go to the first world in
/// declaration-lexicographic order.
Assignment map_world(const CrossWorldPosterior& posterior);

/// The same pipeline with separate factual and counterfactual laws over one
/// exogenous set. Evidence may name exogenous variables as well.
CrossWorldPosterior cross_world_core(const CausalModel& factual, const CausalModel& counterfactual,
                                     const BacktrackingConditional& kernel, const Assignment& x_star,
                                     const Assignment& z, const EngineOptions& options = {});

double cross_world_mass(const CausalModel& factual, const CausalModel& counterfactual,
                        const BacktrackingConditional& kernel, const Assignment& y_star,
                        const Assignment& z, const EngineOptions& options = {});

}  // namespace scmcf
