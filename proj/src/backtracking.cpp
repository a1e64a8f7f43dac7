#include "scmcf/backtracking.hpp"

#include <algorithm>
#include <cmath>

#include "evidence.hpp"
#include "parallel.hpp"
#include "sampling.hpp"
#include "scmcf/error.hpp"

namespace scmcf {

namespace {

constexpr double kEssWarning = 200.0;

std::vector<std::string> names_of(const std::vector<VariableDecl>& decls) {
  std::vector<std::string> out;
  for (const auto& d : decls) out.push_back(d.name);
  return out;
}

std::vector<std::string> starred_all(const std::vector<std::string>& names) {
  std::vector<std::string> out;
  for (const auto& n : names) out.push_back(starred(n));
  return out;
}

void require_shared_exogenous(const CausalModel& factual, const CausalModel& counterfactual,
                              const BacktrackingConditional& kernel) {
  factual.validate();
  counterfactual.validate();
  auto same = [](const std::vector<VariableDecl>& a, const std::vector<VariableDecl>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a[i].name != b[i].name || !(a[i].domain == b[i].domain)) return false;
    return true;
  };
  if (!same(factual.exogenous(), counterfactual.exogenous()) ||
      !same(factual.exogenous(), kernel.exogenous()))
    throw Error(ErrorKind::ValidationError,
                "factual world, counterfactual world and kernel must share the exogenous variables");
}

std::string starred_text(const Assignment& a) {
  Assignment s;
  for (const auto& [n, v] : a) s.set(starred(n), v);
  return to_string(s);
}

enum class Route { Exact, Gaussian, Importance };

Route choose_route(const CausalModel& factual, const CausalModel& counterfactual,
                   const BacktrackingConditional& kernel, Backend backend) {
  const bool auto_pick = backend == Backend::Auto;
  if (kernel.finite() && (auto_pick || backend == Backend::Exact)) return Route::Exact;
  if (backend == Backend::Exact)
    throw Error(ErrorKind::UnsupportedBackend, "the exact backend needs finite exogenous domains");
  const bool gaussian_ok = kernel.prior().kind() == Distribution::Kind::Gaussian &&
                           kernel.gaussian_form().has_value() &&
                           affine_reduced_form(factual).has_value() &&
                           affine_reduced_form(counterfactual).has_value();
  if (gaussian_ok && (auto_pick || backend == Backend::Gaussian)) return Route::Gaussian;
  if (backend == Backend::Gaussian)
    throw Error(ErrorKind::UnsupportedBackend,
                "the Gaussian backend needs a Gaussian prior, a Gaussian-form kernel and affine laws");
  return Route::Importance;
}

// ---------------------------------------------------------------------------
// exact enumeration

struct PairTable {
  std::vector<double> values;  // rows of (u, u*)
  std::vector<double> weights;
  double factual_mass = 0.0;
};

PairTable enumerate_pairs(const CausalModel& factual, const CausalModel& counterfactual,
                          const BacktrackingConditional& kernel, const detail::SlotEvidence& z,
                          const detail::SlotEvidence& x_star) {
  const std::size_t m = kernel.exogenous().size();
  const auto& prior = kernel.prior().tabular();
  std::vector<signed char> cf_ok(kernel.space_size(), -1);
  std::vector<double> slots(counterfactual.slot_count());
  std::vector<double> star(m);
  auto antecedent_holds = [&](std::size_t flat) {
    if (cf_ok[flat] < 0) {
      kernel.decode(flat, slots.data());
      counterfactual.solve_slots(slots);
      cf_ok[flat] = x_star.holds(slots) ? 1 : 0;
    }
    return cf_ok[flat] == 1;
  };

  PairTable out;
  std::vector<double> fslots(factual.slot_count());
  for (std::size_t r = 0; r < prior.rows(); ++r) {
    auto u = prior.row(r);
    std::copy(u.begin(), u.end(), fslots.begin());
    factual.solve_slots(fslots);
    if (!z.holds(fslots)) continue;
    out.factual_mass += prior.weights[r];
    auto k = kernel.row(kernel.encode(u));
    for (std::size_t flat = 0; flat < k.size(); ++flat) {
      if (k[flat] == 0.0 || !antecedent_holds(flat)) continue;
      kernel.decode(flat, star.data());
      out.values.insert(out.values.end(), u.begin(), u.end());
      out.values.insert(out.values.end(), star.begin(), star.end());
      out.weights.push_back(prior.weights[r] * k[flat]);
    }
  }
  return out;
}

bool antecedent_reachable(const CausalModel& counterfactual, const BacktrackingConditional& kernel,
                          const detail::SlotEvidence& x_star) {
  std::vector<double> slots(counterfactual.slot_count());
  for (std::size_t flat = 0; flat < kernel.space_size(); ++flat) {
    kernel.decode(flat, slots.data());
    counterfactual.solve_slots(slots);
    if (x_star.holds(slots)) return true;
  }
  return false;
}

// ---------------------------------------------------------------------------
// Gaussian

struct StackedConstraints {
  Eigen::MatrixXd factual_C;  // over (U, U*)
  Eigen::VectorXd factual_d;
  Eigen::MatrixXd star_C;
  Eigen::VectorXd star_d;
};

StackedConstraints world_constraints(const CausalModel& factual, const CausalModel& counterfactual,
                                     const Assignment& x_star, const Assignment& z) {
  const auto m = static_cast<Eigen::Index>(factual.exogenous().size());
  auto f = detail::affine_constraints(factual, *affine_reduced_form(factual), z);
  auto c = detail::affine_constraints(counterfactual, *affine_reduced_form(counterfactual), x_star);
  StackedConstraints s;
  s.factual_C = Eigen::MatrixXd::Zero(f.C.rows(), 2 * m);
  s.factual_C.leftCols(m) = f.C;
  s.factual_d = f.d;
  s.star_C = Eigen::MatrixXd::Zero(c.C.rows(), 2 * m);
  s.star_C.rightCols(m) = c.C;
  s.star_d = c.d;
  return s;
}

// ---------------------------------------------------------------------------
// importance sampling

ParticleDistribution finish_particles(ParticleDistribution p, std::vector<std::string>& diagnostics,
                                      bool factual_hit) {
  double total = 0.0;
  for (double w : p.weights) total += w;
  if (!(total > 0.0)) {
    if (!factual_hit)
      throw Error(ErrorKind::ZeroProbabilityEvidence, "no sampled world satisfies the factual evidence");
    throw Error(ErrorKind::CounterlegalAntecedent,
                "no sampled world pair satisfies the antecedent; it may be unreachable under the laws");
  }
  for (double& w : p.weights) w /= total;
  p.ess = effective_sample_size(p.weights);
  if (p.ess < kEssWarning) {
    diagnostics.push_back("warning: effective sample size " + format_number(p.ess) + " is below " +
                          format_number(kEssWarning));
  }
  p.diagnostics = diagnostics;
  return p;
}

struct RawDraws {
  ParticleDistribution particles;  // weights not yet normalized
  bool factual_hit = false;
};

// Proposal: u from the prior, u* from the kernel (or uniform on the box when
// the kernel has no sampler); weights are the event indicators.
RawDraws indicator_draws(const CausalModel& factual, const CausalModel& counterfactual,
                         const BacktrackingConditional& kernel, const detail::SlotEvidence& z,
                         const detail::SlotEvidence& x_star, const EngineOptions& options) {
  const std::size_t m = kernel.exogenous().size();
  const std::size_t n = options.samples;
  ParticleDistribution p;
  p.variables = names_of(kernel.exogenous());
  for (const auto& s : starred_all(p.variables)) p.variables.push_back(s);
  p.seed = options.seed;
  p.values.resize(n * 2 * m);
  p.weights.assign(n, 0.0);
  std::vector<char> factual_hit(n, 0);
  detail::RowSampler prior_sampler(kernel.prior());
  const bool direct = kernel.can_sample();
  double volume = 1.0;
  if (!direct)
    for (const auto& d : kernel.exogenous()) volume *= d.domain.hi() - d.domain.lo();

  detail::parallel_chunks(n, options.workers, [&](std::size_t begin, std::size_t end) {
    std::vector<double> fs(factual.slot_count()), cs(counterfactual.slot_count());
    for (std::size_t i = begin; i < end; ++i) {
      CounterStream stream(options.seed, i);
      double* u = p.values.data() + i * 2 * m;
      double* us = u + m;
      prior_sampler.draw(stream, u);
      double w = 1.0;
      if (direct) {
        kernel.sample({u, m}, stream, us);
      } else {
        for (std::size_t j = 0; j < m; ++j) {
          const auto& d = kernel.exogenous()[j].domain;
          us[j] = d.lo() + (d.hi() - d.lo()) * stream.uniform();
          if (!d.contains(u[j])) w = 0.0;
        }
        if (w > 0.0) w = kernel.density({us, m}, {u, m}) * volume;
      }
      std::copy(u, u + m, fs.begin());
      factual.solve_slots(fs);
      if (!z.holds(fs)) continue;
      factual_hit[i] = 1;
      std::copy(us, us + m, cs.begin());
      counterfactual.solve_slots(cs);
      if (!x_star.holds(cs)) continue;
      p.weights[i] = w;
    }
  });
  bool any = std::any_of(factual_hit.begin(), factual_hit.end(), [](char c) { return c != 0; });
  return {std::move(p), any};
}

// Point evidence in affine Gaussian worlds. With u = mu + Lp a and
// u* = K u + c + Lk e, the latent (a, e) is standard normal and the evidence is
// a linear constraint G (a, e) = h. Samples are drawn on that affine subspace
// from a widened proposal and reweighted to the restricted standard normal.
ParticleDistribution subspace_sampler(const CausalModel& factual, const CausalModel& counterfactual,
                                      const BacktrackingConditional& kernel, const Assignment& x_star,
                                      const Assignment& z, const EngineOptions& options,
                                      std::vector<std::string>& diagnostics) {
  const auto m = static_cast<Eigen::Index>(kernel.exogenous().size());
  const auto& g = kernel.prior().gaussian();
  const auto& form = *kernel.gaussian_form();
  Eigen::MatrixXd Lp = psd_factor(g.covariance);
  Eigen::MatrixXd Lk = psd_factor(form.S);
  auto f = detail::affine_constraints(factual, *affine_reduced_form(factual), z);
  auto c = detail::affine_constraints(counterfactual, *affine_reduced_form(counterfactual), x_star);

  const Eigen::Index kf = f.C.rows(), kc = c.C.rows();
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(kf + kc, 2 * m);
  Eigen::VectorXd h(kf + kc);
  G.topLeftCorner(kf, m) = f.C * Lp;
  h.head(kf) = f.d - f.C * g.mean;
  G.bottomLeftCorner(kc, m) = c.C * form.K * Lp;
  G.bottomRightCorner(kc, m) = c.C * Lk;
  h.tail(kc) = c.d - c.C * (form.K * g.mean + form.c);

  auto consistent = [](const Eigen::MatrixXd& A, const Eigen::VectorXd& b, Eigen::VectorXd* solution) {
    Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(A);
    Eigen::VectorXd x = cod.solve(b);
    if (solution) *solution = x;
    return (A * x - b).norm() <= 1e-8 * (1.0 + b.norm());
  };
  if (kf > 0 && !consistent(G.topRows(kf), h.head(kf), nullptr))
    throw Error(ErrorKind::ZeroProbabilityEvidence, "factual evidence is outside the support of the prior");
  Eigen::VectorXd zp;
  if (!consistent(G, h, &zp))
    throw Error(ErrorKind::CounterlegalAntecedent,
                "antecedent is incompatible with the laws and the kernel's support");

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(G, Eigen::ComputeFullV);
  svd.setThreshold(1e-10);
  const Eigen::Index rank = G.rows() == 0 ? 0 : svd.rank();
  Eigen::MatrixXd N = svd.matrixV().rightCols(2 * m - rank);
  const Eigen::Index free = N.cols();
  // Restricted density exp(-|zp + N t|^2 / 2) has mode t = -N^T zp and unit
  // precision; the proposal doubles the variance.
  Eigen::VectorXd t_hat = -N.transpose() * zp;
  const double proposal_var = 2.0;

  const std::size_t n = options.samples;
  ParticleDistribution p;
  p.variables = names_of(kernel.exogenous());
  for (const auto& s : starred_all(p.variables)) p.variables.push_back(s);
  p.seed = options.seed;
  p.values.resize(n * static_cast<std::size_t>(2 * m));
  p.weights.assign(n, 0.0);
  std::vector<double> logw(n);
  detail::parallel_chunks(n, options.workers, [&](std::size_t begin, std::size_t end) {
    Eigen::VectorXd t(free);
    for (std::size_t i = begin; i < end; ++i) {
      CounterStream stream(options.seed, i);
      double log_q = 0.0;
      for (Eigen::Index j = 0; j < free; ++j) {
        double zj = stream.normal();
        t[j] = t_hat[j] + std::sqrt(proposal_var) * zj;
        log_q += -0.5 * zj * zj;
      }
      Eigen::VectorXd latent = zp + N * t;
      logw[i] = -0.5 * latent.squaredNorm() - log_q;
      Eigen::VectorXd u = g.mean + Lp * latent.head(m);
      Eigen::VectorXd us = form.K * u + form.c + Lk * latent.tail(m);
      double* out = p.values.data() + i * static_cast<std::size_t>(2 * m);
      for (Eigen::Index j = 0; j < m; ++j) {
        out[j] = u[j];
        out[m + j] = us[j];
      }
    }
  });
  double top = *std::max_element(logw.begin(), logw.end());
  for (std::size_t i = 0; i < n; ++i) p.weights[i] = std::exp(logw[i] - top);
  return finish_particles(std::move(p), diagnostics, true);
}

CrossWorldPosterior with_star_marginal(Distribution joint, std::string provenance,
                                       std::vector<std::string> diagnostics,
                                       const std::vector<std::string>& exo) {
  Distribution star = marginalise(joint, starred_all(exo));
  return {std::move(joint), std::move(star), std::move(provenance), std::move(diagnostics)};
}

}  // namespace

CrossWorldPosterior cross_world_core(const CausalModel& factual, const CausalModel& counterfactual,
                                     const BacktrackingConditional& kernel, const Assignment& x_star,
                                     const Assignment& z, const EngineOptions& options) {
  require_shared_exogenous(factual, counterfactual, kernel);
  auto zf = detail::resolve_evidence(factual, z, detail::EvidenceScope::Any, "factual evidence");
  auto xs = detail::resolve_evidence(counterfactual, x_star, detail::EvidenceScope::Any, "antecedent");
  const auto exo = names_of(kernel.exogenous());

  switch (choose_route(factual, counterfactual, kernel, options.backend)) {
    case Route::Exact: {
      auto pairs = enumerate_pairs(factual, counterfactual, kernel, zf, xs);
      if (pairs.factual_mass == 0.0)
        throw Error(ErrorKind::ZeroProbabilityEvidence,
                    "factual evidence " + to_string(z) + " has probability 0");
      if (pairs.weights.empty()) {
        if (!antecedent_reachable(counterfactual, kernel, xs))
          throw Error(ErrorKind::CounterlegalAntecedent,
                      "antecedent " + starred_text(x_star) + " is unreachable under the laws for every world");
        throw Error(ErrorKind::CounterlegalAntecedent,
                    "antecedent " + starred_text(x_star) + " is unreachable under the kernel from the factual worlds");
      }
      std::vector<std::string> vars = exo;
      for (const auto& s : starred_all(exo)) vars.push_back(s);
      std::vector<Domain> domains;
      for (int rep = 0; rep < 2; ++rep)
        for (const auto& d : kernel.exogenous()) domains.push_back(d.domain);
      Distribution joint = make_tabular(std::move(vars), std::move(domains), std::move(pairs.values),
                                        std::move(pairs.weights));
      return with_star_marginal(std::move(joint), "exact", {}, exo);
    }
    case Route::Gaussian: {
      auto s = world_constraints(factual, counterfactual, x_star, z);
      auto joint = joint_world_distribution(kernel).gaussian();
      joint = condition_gaussian(joint, s.factual_C, s.factual_d, ErrorKind::ZeroProbabilityEvidence);
      joint = condition_gaussian(joint, s.star_C, s.star_d, ErrorKind::CounterlegalAntecedent);
      return with_star_marginal(std::move(joint), "gaussian", {}, exo);
    }
    case Route::Importance: {
      std::vector<std::string> diagnostics;
      if (zf.finite && xs.finite) {
        auto raw = indicator_draws(factual, counterfactual, kernel, zf, xs, options);
        auto p = finish_particles(std::move(raw.particles), diagnostics, raw.factual_hit);
        return with_star_marginal(std::move(p), "importance", std::move(diagnostics), exo);
      }
      const bool subspace_ok = kernel.prior().kind() == Distribution::Kind::Gaussian &&
                               kernel.gaussian_form().has_value() &&
                               affine_reduced_form(factual).has_value() &&
                               affine_reduced_form(counterfactual).has_value();
      if (!subspace_ok)
        throw Error(ErrorKind::UnsupportedBackend,
                    "point evidence on continuous variables needs affine laws, a Gaussian prior and a "
                    "Gaussian-form kernel");
      auto p = subspace_sampler(factual, counterfactual, kernel, x_star, z, options, diagnostics);
      return with_star_marginal(std::move(p), "importance", std::move(diagnostics), exo);
    }
  }
  throw Error(ErrorKind::UnsupportedBackend, "no backend");
}

double cross_world_mass(const CausalModel& factual, const CausalModel& counterfactual,
                        const BacktrackingConditional& kernel, const Assignment& y_star,
                        const Assignment& z, const EngineOptions& options) {
  require_shared_exogenous(factual, counterfactual, kernel);
  auto zf = detail::resolve_evidence(factual, z, detail::EvidenceScope::Any, "factual event");
  auto ys = detail::resolve_evidence(counterfactual, y_star, detail::EvidenceScope::Any, "counterfactual event");
  switch (choose_route(factual, counterfactual, kernel, options.backend)) {
    case Route::Exact: {
      auto pairs = enumerate_pairs(factual, counterfactual, kernel, zf, ys);
      double total = 0.0;
      for (double w : pairs.weights) total += w;
      return total;
    }
    case Route::Gaussian: {
      auto s = world_constraints(factual, counterfactual, y_star, z);
      Eigen::MatrixXd C(s.factual_C.rows() + s.star_C.rows(), s.factual_C.cols());
      C << s.factual_C, s.star_C;
      Eigen::VectorXd d(s.factual_d.size() + s.star_d.size());
      d << s.factual_d, s.star_d;
      return gaussian_event_probability(joint_world_distribution(kernel).gaussian(), C, d);
    }
    case Route::Importance: {
      if (!zf.finite || !ys.finite)
        throw Error(ErrorKind::UnsupportedBackend,
                    "point events on continuous variables have no Monte Carlo estimate outside affine Gaussian models");
      auto raw = indicator_draws(factual, counterfactual, kernel, zf, ys, options);
      double total = 0.0;
      for (double w : raw.particles.weights) total += w;
      return total / static_cast<double>(raw.particles.rows());
    }
  }
  return 0.0;
}

double backtracking_joint_probability(const CausalModel& model, const BacktrackingConditional& kernel,
                                      const Assignment& y_star, const Assignment& z,
                                      const EngineOptions& options) {
  detail::require_endogenous(model, y_star.names(), "counterfactual event");
  detail::require_endogenous(model, z.names(), "factual event");
  return cross_world_mass(model, model, kernel, y_star, z, options);
}

CrossWorldPosterior cross_world_abduction(const CausalModel& model, const BacktrackingConditional& kernel,
                                          const Assignment& x_star, const Assignment& z,
                                          const EngineOptions& options) {
  detail::require_endogenous(model, x_star.names(), "antecedent");
  detail::require_endogenous(model, z.names(), "factual evidence");
  return cross_world_core(model, model, kernel, x_star, z, options);
}

Distribution backtracking_counterfactual(const CausalModel& model, const BacktrackingConditional& kernel,
                                         const BacktrackingQuery& query, const EngineOptions& options) {
  detail::require_endogenous(model, query.targets, "targets");
  auto posterior = cross_world_abduction(model, kernel, query.counterfactual, query.evidence, options);
  const auto exo = names_of(kernel.exogenous());
  EngineOptions predict = options;
  predict.backend = Backend::Auto;
  auto out = endogenous_distribution(model, rename(posterior.marginal_star, exo), query.targets, predict);
  return rename(out, starred_all(query.targets));
}

Assignment map_world(const CrossWorldPosterior& posterior) {
  const Distribution& d = posterior.marginal_star;
  const auto& vars = d.variables();
  Assignment out;
  switch (d.kind()) {
    case Distribution::Kind::Tabular: {
      const auto& t = d.tabular();
      std::size_t best = 0;
      for (std::size_t r = 1; r < t.rows(); ++r)
        if (t.weights[r] > t.weights[best]) best = r;
      for (std::size_t j = 0; j < vars.size(); ++j) out.set(vars[j], t.row(best)[j]);
      return out;
    }
    case Distribution::Kind::Gaussian: {
      const auto& g = d.gaussian();
      for (std::size_t j = 0; j < vars.size(); ++j) out.set(vars[j], g.mean[static_cast<Eigen::Index>(j)]);
      return out;
    }
    case Distribution::Kind::Particle: {
      const auto& p = d.particles();
      std::size_t best = 0;
      for (std::size_t r = 1; r < p.rows(); ++r)
        if (p.weights[r] > p.weights[best]) best = r;
      for (std::size_t j = 0; j < vars.size(); ++j) out.set(vars[j], p.row(best)[j]);
      return out;
    }
  }
  return out;
}

}  // namespace scmcf
