#include "scmcf/interventional.hpp"

#include "evidence.hpp"
#include "sampling.hpp"
#include "scmcf/error.hpp"
#include "scmcf/kernel.hpp"

namespace scmcf {

namespace {

std::vector<std::string> exogenous_names(const CausalModel& model) {
  std::vector<std::string> out;
  for (const auto& d : model.exogenous()) out.push_back(d.name);
  return out;
}

std::vector<std::string> starred_all(const std::vector<std::string>& names) {
  std::vector<std::string> out;
  for (const auto& n : names) out.push_back(starred(n));
  return out;
}

}  // namespace

Assignment potential_response(const CausalModel& model, const Assignment& u, const Assignment& x) {
  return model.submodel(x).solve(u);
}

double counterfactual_joint_probability(const CausalModel& model, const Distribution& prior,
                                        const TwinQuery& query, const EngineOptions& options) {
  model.validate();
  if (query.empty()) return 1.0;
  std::vector<CausalModel> worlds;
  std::vector<detail::SlotEvidence> events;
  bool finite_events = true;
  for (const auto& clause : query) {
    detail::require_endogenous(model, clause.intervention.names(), "intervention");
    worlds.push_back(model.submodel(clause.intervention));
    events.push_back(detail::resolve_evidence(model, clause.event, detail::EvidenceScope::Any, "event"));
    finite_events = finite_events && events.back().finite;
  }
  auto names = exogenous_names(model);

  if (prior.kind() == Distribution::Kind::Tabular &&
      (options.backend == Backend::Auto || options.backend == Backend::Exact)) {
    auto t = reorder(prior, names).tabular();
    std::vector<double> slots(model.slot_count());
    double total = 0.0;
    for (std::size_t r = 0; r < t.rows(); ++r) {
      bool all = true;
      for (std::size_t c = 0; c < worlds.size() && all; ++c) {
        std::copy(t.row(r).begin(), t.row(r).end(), slots.begin());
        worlds[c].solve_slots(slots);
        all = events[c].holds(slots);
      }
      if (all) total += t.weights[r];
    }
    return total;
  }

  if (prior.kind() == Distribution::Kind::Gaussian &&
      (options.backend == Backend::Auto || options.backend == Backend::Gaussian)) {
    std::vector<LinearConstraint> parts;
    for (std::size_t c = 0; c < worlds.size(); ++c) {
      auto form = affine_reduced_form(worlds[c]);
      if (!form) break;
      parts.push_back(detail::affine_constraints(worlds[c], *form, query[c].event));
    }
    if (parts.size() == worlds.size()) {
      Eigen::Index rows = 0;
      for (const auto& p : parts) rows += p.C.rows();
      Eigen::MatrixXd C(rows, static_cast<Eigen::Index>(names.size()));
      Eigen::VectorXd d(rows);
      Eigen::Index at = 0;
      for (const auto& p : parts) {
        C.middleRows(at, p.C.rows()) = p.C;
        d.segment(at, p.d.size()) = p.d;
        at += p.C.rows();
      }
      return gaussian_event_probability(detail::ordered_gaussian(model, prior), C, d);
    }
    if (options.backend == Backend::Gaussian)
      throw Error(ErrorKind::UnsupportedBackend, "the Gaussian backend needs affine laws over real-valued variables");
  }

  if (options.backend == Backend::Auto || options.backend == Backend::MonteCarlo) {
    if (!finite_events)
      throw Error(ErrorKind::UnsupportedBackend,
                  "point events on continuous variables have no Monte Carlo estimate outside affine Gaussian models");
    Distribution ordered = reorder(prior, names);
    std::vector<double> rows;
    std::vector<double> weights;
    if (ordered.kind() == Distribution::Kind::Particle) {
      rows = ordered.particles().values;
      weights = ordered.particles().weights;
    } else {
      rows = detail::sample_rows(ordered, options.samples, options.seed, options.workers);
      weights.assign(options.samples, 1.0 / static_cast<double>(options.samples));
    }
    const std::size_t m = names.size();
    std::vector<double> slots(model.slot_count());
    double total = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      bool all = true;
      for (std::size_t c = 0; c < worlds.size() && all; ++c) {
        std::copy(rows.begin() + static_cast<std::ptrdiff_t>(i * m),
                  rows.begin() + static_cast<std::ptrdiff_t>((i + 1) * m), slots.begin());
        worlds[c].solve_slots(slots);
        all = events[c].holds(slots);
      }
      if (all) total += weights[i];
    }
    return total;
  }
  throw Error(ErrorKind::UnsupportedBackend,
              std::string("backend '") + std::string(to_string(options.backend)) +
                  "' cannot handle a " + std::string(to_string(prior.kind())) + " prior for this model");
}

Distribution abduction(const CausalModel& model, const Distribution& prior, const Assignment& evidence,
                       const EngineOptions& options) {
  model.validate();
  auto ev = detail::resolve_evidence(model, evidence, detail::EvidenceScope::Any, "evidence");
  auto names = exogenous_names(model);
  bool exact_or_gaussian =
      (prior.kind() == Distribution::Kind::Tabular && options.backend != Backend::MonteCarlo) ||
      (prior.kind() == Distribution::Kind::Gaussian && options.backend != Backend::MonteCarlo &&
       affine_reduced_form(model).has_value());
  if (!exact_or_gaussian && !ev.finite)
    throw Error(ErrorKind::UnsupportedBackend,
                "point evidence on continuous variables needs the Gaussian backend (affine laws, Gaussian prior)");
  std::vector<std::string> vars = names;
  for (const auto& n : evidence.names())
    if (!model.exogenous_index(n)) vars.push_back(n);
  auto joint = endogenous_distribution(model, prior, vars, options);
  return marginalise(condition_on(joint, evidence), names);
}

Distribution interventional_counterfactual(const CausalModel& model, const Distribution& prior,
                                           const InterventionalQuery& query,
                                           const EngineOptions& options) {
  model.validate();
  detail::require_endogenous(model, query.evidence.names(), "evidence");
  detail::require_endogenous(model, query.intervention.names(), "intervention");
  detail::require_endogenous(model, query.targets, "targets");
  CausalModel acted = model.submodel(query.intervention);
  Distribution posterior = abduction(model, prior, query.evidence, options);
  EngineOptions predict = options;
  predict.backend = Backend::Auto;
  auto out = endogenous_distribution(acted, posterior, query.targets, predict);
  return rename(out, starred_all(query.targets));
}

}  // namespace scmcf
