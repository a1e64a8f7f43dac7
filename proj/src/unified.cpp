#include "scmcf/unified.hpp"

#include <algorithm>
#include <set>

#include "evidence.hpp"

namespace scmcf {

namespace {

constexpr std::size_t kMaxConfigurations = 4096;

std::string regime_name(const std::string& variable) { return "R_" + variable; }

std::vector<std::string> names_of(const std::vector<VariableDecl>& decls) {
  std::vector<std::string> out;
  for (const auto& d : decls) out.push_back(d.name);
  return out;
}

std::vector<double> levels_for(const VariableDecl& v, const std::vector<double>* extra) {
  const Domain& d = v.domain;
  if (d.is_finite()) {
    if (extra) {
      for (double x : *extra) {
        if (!d.index_of(x))
          throw Error(ErrorKind::DomainMismatch,
                      "regime level " + format_number(x) + " is outside the domain of " + v.name);
      }
    }
    return {d.values().begin(), d.values().end()};
  }
  std::vector<double> out;
  if (extra) {
    for (double x : *extra) {
      if (!d.contains(x))
        throw Error(ErrorKind::DomainMismatch,
                    "regime level " + format_number(x) + " is outside the domain of " + v.name);
      out.push_back(x);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end(),
                        [](double a, double b) { return std::abs(a - b) <= kValueTolerance; }),
            out.end());
  return out;
}

// ite(R == 0, f, ite(R == 1, l1, ... lk)); the last level closes the chain.
Expression switched_law(const std::string& regime, const Expression& law, const std::vector<double>& levels) {
  if (levels.empty()) return law;
  auto r = Expression::variable(regime);
  auto is = [&](std::size_t i) {
    return Expression::binary(Op::Eq, r, Expression::constant(static_cast<double>(i)));
  };
  Expression tail = Expression::constant(levels.back());
  for (std::size_t i = levels.size() - 1; i-- > 0;)
    tail = Expression::ite(is(i + 1), Expression::constant(levels[i]), tail);
  return Expression::ite(is(0), law, tail);
}

std::size_t resolve_clause(const AugmentedModel& aug, const std::string& variable,
                           const std::optional<double>& value) {
  if (aug.base().kind_of(variable) != VariableKind::Endogenous)
    throw Error(ErrorKind::UnknownVariable, "regime clause names no endogenous variable: " + variable);
  if (!value) return 0;
  const auto& reg = aug.regime_for(variable);
  auto idx = reg.index_of_level(*value);
  if (!idx)
    throw Error(ErrorKind::DomainMismatch,
                "regime value " + format_number(*value) + " is not a level of " + reg.name);
  return *idx;
}

using Config = std::vector<std::size_t>;  // r followed by r*

std::map<Config, double> configurations(const AugmentedModel& aug, const Distribution& regime_prior,
                                        const RegimeKernel& regime_kernel, const UnifiedQuery& query) {
  const auto& regimes = aug.regimes();
  const std::size_t n = regimes.size();
  const auto names = aug.regime_names();
  if (regime_prior.kind() != Distribution::Kind::Tabular)
    throw Error(ErrorKind::ValidationError, "the regime prior must be tabular");
  {
    auto given = regime_prior.variables();
    auto want = names;
    std::sort(given.begin(), given.end());
    std::sort(want.begin(), want.end());
    if (given != want)
      throw Error(ErrorKind::ValidationError, "the regime prior must range over exactly the regime variables");
  }
  const auto prior = reorder(regime_prior, names).tabular();

  std::vector<std::optional<std::size_t>> fact_clamp(n), cf_clamp(n);
  auto index_of_var = [&](const std::string& v) {
    for (std::size_t i = 0; i < n; ++i)
      if (regimes[i].variable == v) return i;
    throw Error(ErrorKind::UnknownVariable, "regime clause names no endogenous variable: " + v);
  };
  for (const auto& [v, value] : query.factual_regimes) fact_clamp[index_of_var(v)] = resolve_clause(aug, v, value);
  for (const auto& [v, value] : query.counterfactual_regimes) cf_clamp[index_of_var(v)] = resolve_clause(aug, v, value);

  std::vector<double> flip(n, 0.0);
  for (const auto& [v, rho] : regime_kernel.flip) {
    std::size_t i = index_of_var(v);
    if (!(rho >= 0.0 && rho <= 1.0))
      throw Error(ErrorKind::ValidationError, "regime flip probability for " + v + " must lie in [0, 1]");
    flip[i] = rho;
  }

  std::map<Config, double> out;
  for (std::size_t row = 0; row < prior.rows(); ++row) {
    Config r(n);
    for (std::size_t i = 0; i < n; ++i) {
      auto idx = regimes[i].domain.index_of(prior.row(row)[i]);
      if (!idx) throw Error(ErrorKind::DomainMismatch, "regime prior value outside " + regimes[i].name);
      r[i] = fact_clamp[i] ? *fact_clamp[i] : *idx;
    }
    // per-variable support of R*_i given r_i
    std::vector<std::vector<std::pair<std::size_t, double>>> moves(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = regimes[i].domain.size();
      if (cf_clamp[i]) {
        moves[i] = {{*cf_clamp[i], 1.0}};
      } else if (flip[i] == 0.0 || k == 1) {
        moves[i] = {{r[i], 1.0}};
      } else {
        for (std::size_t j = 0; j < k; ++j) {
          double w = j == r[i] ? 1.0 - flip[i] : flip[i] / static_cast<double>(k - 1);
          if (w > 0.0) moves[i].push_back({j, w});
        }
      }
    }
    std::vector<std::size_t> pos(n, 0);
    while (true) {
      Config c = r;
      double w = prior.weights[row];
      for (std::size_t i = 0; i < n; ++i) {
        c.push_back(moves[i][pos[i]].first);
        w *= moves[i][pos[i]].second;
      }
      out[c] += w;
      if (out.size() > kMaxConfigurations)
        throw Error(ErrorKind::UnsupportedBackend, "more than " + std::to_string(kMaxConfigurations) +
                                                       " regime configurations have positive weight");
      std::size_t i = n;
      while (i > 0 && ++pos[i - 1] == moves[i - 1].size()) pos[--i] = 0;
      if (i == 0) break;
    }
  }
  return out;
}

// Rows of `dist` over endogenous targets, widened to the full target list with
// the configuration's regime values, appended to `rows`/`weights` scaled by w.
void append_rows(const Distribution& dist, const std::vector<std::string>& targets,
                 const std::map<std::string, double>& regime_values, double w, std::vector<double>& rows,
                 std::vector<double>& weights) {
  auto emit = [&](std::size_t count, auto row_of, const std::vector<double>& ws) {
    for (std::size_t r = 0; r < count; ++r) {
      auto row = row_of(r);
      for (const auto& t : targets) {
        auto it = regime_values.find(t);
        rows.push_back(it != regime_values.end() ? it->second : row[*dist.index_of(t)]);
      }
      weights.push_back(w * ws[r]);
    }
  };
  if (dist.kind() == Distribution::Kind::Tabular) {
    const auto& t = dist.tabular();
    emit(t.rows(), [&](std::size_t r) { return t.row(r); }, t.weights);
  } else {
    const auto& p = dist.particles();
    emit(p.rows(), [&](std::size_t r) { return p.row(r); }, p.weights);
  }
}

}  // namespace

std::optional<std::size_t> RegimeVariable::index_of_level(double value) const {
  for (std::size_t i = 0; i < levels.size(); ++i)
    if (std::abs(levels[i] - value) <= kValueTolerance) return i + 1;
  return std::nullopt;
}

const RegimeVariable& AugmentedModel::regime_for(const std::string& variable) const {
  for (const auto& r : regimes_)
    if (r.variable == variable) return r;
  throw Error(ErrorKind::UnknownVariable, "no regime variable for " + variable);
}

std::vector<std::string> AugmentedModel::regime_names() const {
  std::vector<std::string> out;
  for (const auto& r : regimes_) out.push_back(r.name);
  return out;
}

CausalModel AugmentedModel::under(const std::vector<std::size_t>& regime_indices) const {
  Assignment x;
  for (std::size_t i = 0; i < regimes_.size(); ++i)
    if (regime_indices.at(i) != 0) x.set(regimes_[i].variable, regimes_[i].level(regime_indices[i]));
  return x.empty() ? base_ : base_.submodel(x);
}

AugmentedModel augment(const CausalModel& model, const std::map<std::string, std::vector<double>>& levels) {
  model.validate();
  for (const auto& [v, _] : levels) {
    if (model.kind_of(v) != VariableKind::Endogenous)
      throw Error(ErrorKind::UnknownVariable, "regime levels given for a non-endogenous name: " + v);
  }
  AugmentedModel aug;
  aug.base_ = model;
  std::vector<VariableDecl> exo = model.exogenous();
  std::vector<StructuralLaw> laws;
  for (const auto& v : model.endogenous()) {
    const auto& labels = v.domain.labels();
    if (std::find(labels.begin(), labels.end(), kObsLabel) != labels.end())
      throw Error(ErrorKind::ReservedSymbolCollision,
                  "the domain of " + v.name + " contains the reserved value " + kObsLabel);
    RegimeVariable reg;
    reg.variable = v.name;
    reg.name = regime_name(v.name);
    if (model.find(reg.name))
      throw Error(ErrorKind::ReservedSymbolCollision, "variable " + reg.name + " clashes with a regime variable");
    auto it = levels.find(v.name);
    reg.levels = levels_for(v, it == levels.end() ? nullptr : &it->second);
    std::vector<std::string> reg_labels{kObsLabel};
    for (double x : reg.levels) reg_labels.push_back(v.domain.format_value(x));
    reg.domain = Domain::labelled(reg_labels);
    exo.push_back({reg.name, reg.domain});
    laws.push_back({v.name, switched_law(reg.name, model.law_for(v.name).function, reg.levels)});
    aug.regimes_.push_back(std::move(reg));
  }
  aug.augmented_ = CausalModel(std::move(exo), model.endogenous(), std::move(laws));
  aug.augmented_.validate();
  return aug;
}

Distribution default_observational_regime_prior(const AugmentedModel& aug) {
  std::vector<Domain> domains;
  for (const auto& r : aug.regimes()) domains.push_back(r.domain);
  return make_tabular(aug.regime_names(), domains, std::vector<double>(domains.size(), 0.0), {1.0});
}

UnifiedResult unified_counterfactual(const AugmentedModel& aug, const BacktrackingConditional& kernel,
                                     const Distribution& regime_prior, const RegimeKernel& regime_kernel,
                                     const UnifiedQuery& query, const EngineOptions& options) {
  const CausalModel& base = aug.base();
  std::vector<std::string> endo_targets;
  std::map<std::string, std::size_t> regime_targets;  // regime name -> regime position
  for (const auto& t : query.targets) {
    bool is_regime = false;
    for (std::size_t i = 0; i < aug.regimes().size(); ++i) {
      if (aug.regimes()[i].name == t) {
        regime_targets[t] = i;
        is_regime = true;
      }
    }
    if (!is_regime) endo_targets.push_back(t);
  }
  detail::require_endogenous(base, endo_targets, "targets");
  if (!regime_targets.empty() && !base.all_finite())
    throw Error(ErrorKind::UnsupportedBackend, "regime targets need a finite model");

  auto configs = configurations(aug, regime_prior, regime_kernel, query);
  const std::size_t n = aug.regimes().size();
  const auto exo = names_of(kernel.exogenous());
  std::vector<std::string> starred_targets;
  for (const auto& t : query.targets) starred_targets.push_back(starred(t));

  EngineOptions predict = options;
  predict.backend = Backend::Auto;
  auto counterfactual_targets = [&](const CausalModel& cf, const CrossWorldPosterior& post) {
    return endogenous_distribution(cf, rename(post.marginal_star, exo), endo_targets, predict);
  };

  UnifiedResult result{TabularDistribution{}, "", 0, {}};
  if (configs.size() == 1 && regime_targets.empty()) {
    const Config& c = configs.begin()->first;
    auto fact = aug.under({c.begin(), c.begin() + static_cast<std::ptrdiff_t>(n)});
    auto cf = aug.under({c.begin() + static_cast<std::ptrdiff_t>(n), c.end()});
    auto post = cross_world_core(fact, cf, kernel, query.counterfactual, query.evidence, options);
    result.distribution = rename(counterfactual_targets(cf, post), starred_targets);
    result.provenance = post.provenance;
    result.configurations = 1;
    result.diagnostics = post.diagnostics;
    return result;
  }
  if (!base.all_finite())
    throw Error(ErrorKind::UnsupportedBackend,
                "a real-valued model admits only one regime configuration; " + std::to_string(configs.size()) +
                    " have positive weight");

  // Mixture over configurations weighted by P(r, r*) P_B(x*, z | r, r*).
  double factual_total = 0.0, total = 0.0;
  std::vector<std::pair<const Config*, double>> live;
  for (const auto& [c, w] : configs) {
    auto fact = aug.under({c.begin(), c.begin() + static_cast<std::ptrdiff_t>(n)});
    auto cf = aug.under({c.begin() + static_cast<std::ptrdiff_t>(n), c.end()});
    factual_total += w * cross_world_mass(fact, cf, kernel, {}, query.evidence, options);
    double joint = w * cross_world_mass(fact, cf, kernel, query.counterfactual, query.evidence, options);
    if (joint > 0.0) {
      live.push_back({&c, joint});
      total += joint;
    }
  }
  if (factual_total == 0.0)
    throw Error(ErrorKind::ZeroProbabilityEvidence,
                "factual evidence " + to_string(query.evidence) + " has probability zero in every regime");
  if (total == 0.0)
    throw Error(ErrorKind::CounterlegalAntecedent,
                "antecedent " + to_string(query.counterfactual) +
                    " is unreachable in every regime configuration with positive weight");

  std::vector<double> rows, weights;
  std::set<std::string> provenances;
  bool particles = false;
  for (const auto& [c, joint] : live) {
    auto fact = aug.under({c->begin(), c->begin() + static_cast<std::ptrdiff_t>(n)});
    auto cf = aug.under({c->begin() + static_cast<std::ptrdiff_t>(n), c->end()});
    auto post = cross_world_core(fact, cf, kernel, query.counterfactual, query.evidence, options);
    provenances.insert(post.provenance);
    for (const auto& d : post.diagnostics) result.diagnostics.push_back(d);
    std::map<std::string, double> regime_values;
    for (const auto& [name, i] : regime_targets) regime_values[name] = static_cast<double>((*c)[n + i]);
    Distribution dist = endo_targets.empty()
                            ? Distribution(make_tabular({}, {}, {}, {1.0}))
                            : counterfactual_targets(cf, post);
    particles = particles || dist.kind() == Distribution::Kind::Particle;
    append_rows(dist, query.targets, regime_values, joint / total, rows, weights);
  }
  result.configurations = live.size();
  result.provenance = provenances.size() == 1 ? *provenances.begin() : "mixed";
  if (particles) {
    ParticleDistribution p;
    p.variables = starred_targets;
    p.values = std::move(rows);
    double sum = 0.0;
    for (double w : weights) sum += w;
    for (double& w : weights) w /= sum;
    p.weights = std::move(weights);
    p.seed = options.seed;
    p.ess = effective_sample_size(p.weights);
    result.distribution = p;
  } else {
    std::vector<Domain> domains;
    for (const auto& t : query.targets) {
      auto it = regime_targets.find(t);
      domains.push_back(it != regime_targets.end() ? aug.regimes()[it->second].domain : base.domain(t));
    }
    result.distribution = make_tabular(starred_targets, domains, std::move(rows), std::move(weights));
  }
  return result;
}

}  // namespace scmcf
