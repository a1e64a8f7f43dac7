#pragma once

#include <string>
#include <vector>

#include "scmcf/model.hpp"
#include "scmcf/probability.hpp"

namespace scmcf {

struct InterventionalQuery {
  Assignment evidence;      // factual, over endogenous variables
  Assignment intervention;  // do(X = x)
  std::vector<std::string> targets;
};

/// One conjunct Y_x = y of a joint counterfactual event.
struct TwinClause {
  Assignment intervention;
  Assignment event;
};

using TwinQuery = std::vector<TwinClause>;

/// Y_x(u): solution of the submodel M_x at u.
Assignment potential_response(const CausalModel& model, const Assignment& u, const Assignment& x);

/// Probability that every clause's event holds in its own submodel, jointly
/// over the shared exogenous draw.
double counterfactual_joint_probability(const CausalModel& model, const Distribution& prior,
                                        const TwinQuery& query, const EngineOptions& options = {});

/// Abduction, action, prediction. The result is over the starred targets.
Distribution interventional_counterfactual(const CausalModel& model, const Distribution& prior,
                                           const InterventionalQuery& query,
                                           const EngineOptions& options = {});

/// P(U | evidence) over the exogenous variables in declaration order.
Distribution abduction(const CausalModel& model, const Distribution& prior, const Assignment& evidence,
                       const EngineOptions& options = {});

}  // namespace scmcf
