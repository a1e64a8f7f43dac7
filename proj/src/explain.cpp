#include "scmcf/explain.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>

#include "scmcf/interventional.hpp"
#include "scmcf/rng.hpp"

namespace scmcf {

namespace {

constexpr std::size_t kMaxFeatures = 20;

[[noreturn]] void invalid(const std::string& message) { throw Error(ErrorKind::InvalidTask, message); }

bool same_value(double a, double b) { return std::abs(a - b) <= kValueTolerance; }

// Posterior over the starred `targets` given Y* = y*, the factual (x, y) and
// any extra counterfactual evidence. Particle output over finite targets is
// merged into a table.
Distribution posterior(const ExplanationTask& task, const Assignment& extra, const std::vector<std::string>& targets,
                       const EngineOptions& options) {
  Assignment cf = extra;
  cf.set(task.target, task.desired);
  auto dist = backtracking_counterfactual(task.model, task.kernel, {task.factual, cf, targets}, options);
  if (dist.kind() != Distribution::Kind::Particle) return dist;
  std::vector<Domain> domains;
  for (const auto& t : targets) {
    domains.push_back(task.model.domain(t));
    if (!domains.back().is_finite()) return dist;
  }
  const auto& p = dist.particles();
  return make_tabular(p.variables, domains, p.values, p.weights);
}

std::size_t argmax(const std::vector<double>& weights, const std::function<bool(std::size_t)>& allowed) {
  std::size_t best = weights.size();
  for (std::size_t r = 0; r < weights.size(); ++r) {
    if (!allowed(r)) continue;
    if (best == weights.size() || weights[r] > weights[best]) best = r;
  }
  return best;
}

// Most probable point of `dist` among rows passing `allowed`; nullopt if none.
std::optional<Assignment> mode(const Distribution& dist, const std::function<bool(std::span<const double>)>& allowed) {
  const auto& vars = dist.variables();
  Assignment out;
  auto fill = [&](std::span<const double> row) {
    for (std::size_t j = 0; j < vars.size(); ++j) out.set(vars[j], row[j]);
    return out;
  };
  switch (dist.kind()) {
    case Distribution::Kind::Tabular: {
      const auto& t = dist.tabular();
      auto best = argmax(t.weights, [&](std::size_t r) { return allowed(t.row(r)); });
      if (best == t.rows()) return std::nullopt;
      return fill(t.row(best));
    }
    case Distribution::Kind::Particle: {
      const auto& p = dist.particles();
      auto best = argmax(p.weights, [&](std::size_t r) { return allowed(p.row(r)); });
      if (best == p.rows()) return std::nullopt;
      return fill(p.row(best));
    }
    case Distribution::Kind::Gaussian: {
      const auto& g = dist.gaussian();
      std::vector<double> mean(g.mean.data(), g.mean.data() + g.mean.size());
      if (!allowed(mean)) return std::nullopt;
      return fill(mean);
    }
  }
  return std::nullopt;
}

void require_features(const ExplanationTask& task, const std::vector<std::string>& names) {
  for (const auto& n : names)
    if (std::find(task.features.begin(), task.features.end(), n) == task.features.end())
      invalid(n + " is not a feature of the task");
}

double normal_upper_tail(double x, double mean, double sd) {
  return 0.5 * std::erfc((x - mean) / (sd * std::sqrt(2.0)));
}

}  // namespace

void validate(const ExplanationTask& task) {
  const auto& m = task.model;
  m.validate();
  if (m.kind_of(task.target) != VariableKind::Endogenous) invalid("target " + task.target + " is not endogenous");
  if (task.features.empty()) invalid("the task needs at least one feature");
  for (std::size_t i = 0; i < task.features.size(); ++i) {
    const auto& f = task.features[i];
    if (m.kind_of(f) != VariableKind::Endogenous) invalid("feature " + f + " is not endogenous");
    if (f == task.target) invalid("the target cannot be a feature");
    if (std::find(task.features.begin(), task.features.begin() + static_cast<std::ptrdiff_t>(i), f) !=
        task.features.begin() + static_cast<std::ptrdiff_t>(i))
      invalid("feature " + f + " is listed twice");
  }
  const auto& law = m.law_for(task.target).function;
  for (const auto& v : law.variables())
    if (std::find(task.features.begin(), task.features.end(), v) == task.features.end())
      invalid("the law of " + task.target + " reads " + v + ", which is not a feature");
  for (const auto& f : task.features)
    if (!task.factual.contains(f)) invalid("the factual assignment has no value for feature " + f);
  if (!task.factual.contains(task.target)) invalid("the factual assignment has no value for " + task.target);
  for (const auto& [n, v] : task.factual) {
    if (n != task.target && std::find(task.features.begin(), task.features.end(), n) == task.features.end())
      invalid("the factual assignment names " + n + ", which is neither a feature nor the target");
    if (!m.domain(n).contains(v)) invalid("factual value of " + n + " is outside its domain");
  }
  double fx = m.domain(task.target).snap(law.evaluate([&](const std::string& v) { return task.factual.at(v); }));
  if (!same_value(fx, task.factual.at(task.target)))
    invalid("factual " + task.target + " = " + format_number(task.factual.at(task.target)) +
            " disagrees with its law, which gives " + format_number(fx));
  if (!m.domain(task.target).contains(task.desired))
    invalid("desired value " + format_number(task.desired) + " is outside the domain of " + task.target);
}

Assignment map_explanation(const ExplanationTask& task, const EngineOptions& options) {
  validate(task);
  auto dist = posterior(task, {}, task.features, options);
  return *mode(dist, [](std::span<const double>) { return true; });
}

std::vector<SparseExplanation> sparse_explanations(const ExplanationTask& task, std::size_t k, double alpha,
                                                   const EngineOptions& options) {
  validate(task);
  const std::size_t n = task.features.size();
  if (n > kMaxFeatures)
    throw Error(ErrorKind::FeatureSpaceTooLarge,
                std::to_string(n) + " features exceed the limit of " + std::to_string(kMaxFeatures));
  for (const auto& f : task.features)
    if (!task.model.domain(f).is_finite())
      throw Error(ErrorKind::UnsupportedBackend, "sparse explanations need finite features; " + f + " is not");
  if (k == 0) return {};

  auto dist = posterior(task, {}, task.features, options);
  const auto& t = dist.tabular();
  std::vector<std::uint32_t> changed(t.rows(), 0);
  for (std::size_t r = 0; r < t.rows(); ++r)
    for (std::size_t i = 0; i < n; ++i)
      if (!same_value(t.row(r)[i], task.factual.at(task.features[i]))) changed[r] |= 1u << i;

  // P(every feature of Z changed) bounds the score of Z and all its supersets.
  auto bound = [&](std::uint32_t z) {
    double s = 0.0;
    for (std::size_t r = 0; r < t.rows(); ++r)
      if ((changed[r] & z) == z) s += t.weights[r];
    return s;
  };
  std::vector<SparseExplanation> out;
  std::function<void(std::uint32_t, std::size_t, std::size_t)> visit = [&](std::uint32_t z, std::size_t next,
                                                                          std::size_t size) {
    if (z != 0) {
      for (std::size_t r = 0; r < t.rows(); ++r) {
        if (changed[r] != z || !(t.weights[r] > alpha)) continue;
        SparseExplanation e;
        for (std::size_t i = 0; i < n; ++i) {
          if (!(z & (1u << i))) continue;
          e.subset.push_back(task.features[i]);
          e.values.set(starred(task.features[i]), t.row(r)[i]);
        }
        e.score = t.weights[r];
        out.push_back(std::move(e));
      }
    }
    if (size == k) return;
    for (std::size_t i = next; i < n; ++i) {
      std::uint32_t child = z | (1u << i);
      if (bound(child) > alpha) visit(child, i + 1, size + 1);
    }
  };
  visit(0, 0, 0);

  auto position = [&](const SparseExplanation& e) {
    std::vector<std::size_t> pos;
    for (const auto& f : e.subset)
      pos.push_back(static_cast<std::size_t>(std::find(task.features.begin(), task.features.end(), f) -
                                             task.features.begin()));
    return pos;
  };
  auto values = [&](const SparseExplanation& e) {
    std::vector<std::size_t> idx;
    for (const auto& [name, v] : e.values) {
      const auto& f = name.substr(0, name.size() - 1);
      idx.push_back(*task.model.domain(f).index_of(v));
    }
    return idx;
  };
  std::stable_sort(out.begin(), out.end(), [&](const SparseExplanation& a, const SparseExplanation& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.subset.size() != b.subset.size()) return a.subset.size() < b.subset.size();
    auto pa = position(a), pb = position(b);
    if (pa != pb) return pa < pb;
    return values(a) < values(b);
  });
  return out;
}

double unchanged_mass(const ExplanationTask& task, const EngineOptions& options) {
  validate(task);
  auto dist = posterior(task, {}, task.features, options);
  Assignment same;
  for (const auto& f : task.features) same.set(starred(f), task.factual.at(f));
  if (dist.kind() == Distribution::Kind::Tabular) return probability(dist.tabular(), same);
  throw Error(ErrorKind::UnsupportedBackend, "the unchanged mass needs finite features");
}

Assignment fixed_remainder_explanation(const ExplanationTask& task, const std::vector<std::string>& subset,
                                       const EngineOptions& options) {
  validate(task);
  require_features(task, subset);
  Assignment keep;
  for (const auto& f : task.features)
    if (std::find(subset.begin(), subset.end(), f) == subset.end()) keep.set(f, task.factual.at(f));
  if (subset.empty()) {
    Assignment cf = keep;
    cf.set(task.target, task.desired);
    cross_world_abduction(task.model, task.kernel, cf, task.factual, options);
    return {};
  }
  auto dist = posterior(task, keep, subset, options);
  auto best = mode(dist, [&](std::span<const double> row) {
    for (std::size_t i = 0; i < subset.size(); ++i)
      if (same_value(row[i], task.factual.at(subset[i]))) return false;
    return true;
  });
  if (!best) {
    std::string names;
    for (const auto& f : subset) names += (names.empty() ? "" : ", ") + f;
    throw Error(ErrorKind::CounterlegalAntecedent, task.target + "* = " + format_number(task.desired) +
                                                       " cannot be reached by changing only {" + names + "}");
  }
  return *best;
}

double Calibration::operator()(double y) const {
  switch (kind) {
    case Kind::Identity: return y;
    case Kind::Negate: return -y;
    case Kind::Exp: return std::exp(y);
    case Kind::Affine: return a * y + b;
  }
  return y;
}

bool Calibration::increasing() const {
  switch (kind) {
    case Kind::Negate: return false;
    case Kind::Affine: return a > 0;
    default: return true;
  }
}

double attribution_score(const AttributionTask& task, const std::vector<std::string>& subset,
                         const EngineOptions& options) {
  const auto& m = task.model;
  m.validate();
  if (m.kind_of(task.target) != VariableKind::Endogenous)
    throw Error(ErrorKind::UnknownVariable, "attribution target " + task.target + " is not endogenous");
  if (task.tau.kind == Calibration::Kind::Affine && task.tau.a == 0.0)
    throw Error(ErrorKind::InvalidTask, "an affine calibration needs a nonzero slope");
  for (const auto& s : subset)
    if (m.kind_of(s) != VariableKind::Exogenous)
      throw Error(ErrorKind::UnknownVariable, s + " is not an exogenous variable");

  EngineOptions exact = options;
  if (exact.backend == Backend::MonteCarlo) exact.backend = Backend::Auto;
  auto u_post = abduction(m, task.prior, task.observation, exact);
  Assignment u;
  if (u_post.kind() == Distribution::Kind::Tabular && u_post.tabular().rows() == 1) {
    const auto& t = u_post.tabular();
    for (std::size_t j = 0; j < t.variables.size(); ++j) u.set(t.variables[j], t.row(0)[j]);
  } else if (u_post.kind() == Distribution::Kind::Gaussian &&
             u_post.gaussian().covariance.cwiseAbs().maxCoeff() <= kSymmetryTolerance) {
    const auto& g = u_post.gaussian();
    for (std::size_t j = 0; j < g.variables.size(); ++j) u.set(g.variables[j], g.mean[static_cast<Eigen::Index>(j)]);
  } else {
    throw Error(ErrorKind::NonInvertibleAtObservation,
                "the observation " + to_string(task.observation) + " does not determine the exogenous state");
  }
  const double y = task.observation.contains(task.target) ? task.observation.at(task.target)
                                                          : m.solve(u).at(task.target);

  KernelSpec spec;
  spec.kind = KernelKind::PriorIndependent;
  auto kernel = BacktrackingConditional::bind(spec, m.exogenous(), task.prior);
  Assignment clamp;
  for (const auto& s : subset) clamp.set(s, u.at(s));
  auto post = cross_world_core(m, m, kernel, clamp, task.observation, options);
  std::vector<std::string> exo;
  for (const auto& d : m.exogenous()) exo.push_back(d.name);
  EngineOptions predict = options;
  predict.backend = Backend::Auto;
  auto y_star = endogenous_distribution(m, rename(post.marginal_star, exo), {task.target}, predict);

  const double threshold = task.tau(y);
  const double slack = kValueTolerance * std::max(1.0, std::abs(threshold));
  auto exceeds = [&](double v) { return task.tau(v) >= threshold - slack; };
  switch (y_star.kind()) {
    case Distribution::Kind::Tabular: {
      const auto& t = y_star.tabular();
      double s = 0.0;
      for (std::size_t r = 0; r < t.rows(); ++r)
        if (exceeds(t.row(r)[0])) s += t.weights[r];
      return std::min(s, 1.0);
    }
    case Distribution::Kind::Particle: {
      const auto& p = y_star.particles();
      double s = 0.0;
      for (std::size_t r = 0; r < p.rows(); ++r)
        if (exceeds(p.row(r)[0])) s += p.weights[r];
      return std::min(s, 1.0);
    }
    case Distribution::Kind::Gaussian: {
      const auto& g = y_star.gaussian();
      const double mean = g.mean[0], var = g.covariance(0, 0);
      if (var <= kSymmetryTolerance * std::max(1.0, mean * mean)) return exceeds(mean) ? 1.0 : 0.0;
      const double sd = std::sqrt(var);
      return task.tau.increasing() ? normal_upper_tail(y, mean, sd) : 1.0 - normal_upper_tail(y, mean, sd);
    }
  }
  return 0.0;
}

ShapleyAttribution shapley_attribution(const AttributionTask& task, std::size_t permutations, std::uint64_t seed,
                                       const EngineOptions& options) {
  const auto& exo = task.model.exogenous();
  const std::size_t n = exo.size();
  if (n > 63) throw Error(ErrorKind::UnsupportedBackend, "Shapley attribution supports at most 63 exogenous variables");
  if (permutations == 0) throw Error(ErrorKind::InvalidTask, "Shapley attribution needs at least one permutation");
  std::map<std::uint64_t, double> cache;
  auto score = [&](std::uint64_t mask) {
    auto it = cache.find(mask);
    if (it != cache.end()) return it->second;
    std::vector<std::string> subset;
    for (std::size_t j = 0; j < n; ++j)
      if (mask & (std::uint64_t{1} << j)) subset.push_back(exo[j].name);
    double s = attribution_score(task, subset, options);
    cache.emplace(mask, s);
    return s;
  };
  ShapleyAttribution out;
  out.values.assign(n, 0.0);
  for (const auto& d : exo) out.variables.push_back(d.name);
  std::vector<std::size_t> order(n);
  for (std::size_t p = 0; p < permutations; ++p) {
    for (std::size_t j = 0; j < n; ++j) order[j] = j;
    CounterStream stream(seed, p);
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[stream.below(i)]);
    std::uint64_t mask = 0;
    double prev = score(0);
    for (std::size_t j : order) {
      mask |= std::uint64_t{1} << j;
      double cur = score(mask);
      out.values[j] += cur - prev;
      prev = cur;
    }
  }
  for (double& v : out.values) v /= static_cast<double>(permutations);
  out.permutations = permutations;
  return out;
}

}  // namespace scmcf
