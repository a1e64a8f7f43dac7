#include "scmcf/probability.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

#include "parallel.hpp"
#include "sampling.hpp"

namespace scmcf {

// ---------------------------------------------------------------------------
// Distribution

const std::vector<std::string>& Distribution::variables() const {
  return std::visit([](const auto& d) -> const std::vector<std::string>& { return d.variables; },
                    v_);
}

std::optional<std::size_t> Distribution::index_of(const std::string& name) const {
  const auto& vars = variables();
  auto it = std::find(vars.begin(), vars.end(), name);
  if (it == vars.end()) return std::nullopt;
  return static_cast<std::size_t>(it - vars.begin());
}

const TabularDistribution& Distribution::tabular() const {
  if (auto* t = std::get_if<TabularDistribution>(&v_)) return *t;
  throw Error(ErrorKind::UnsupportedBackend, "distribution is not tabular");
}

const GaussianDistribution& Distribution::gaussian() const {
  if (auto* g = std::get_if<GaussianDistribution>(&v_)) return *g;
  throw Error(ErrorKind::UnsupportedBackend, "distribution is not Gaussian");
}

const ParticleDistribution& Distribution::particles() const {
  if (auto* p = std::get_if<ParticleDistribution>(&v_)) return *p;
  throw Error(ErrorKind::UnsupportedBackend, "distribution is not a particle set");
}

std::string_view to_string(Distribution::Kind kind) {
  switch (kind) {
    case Distribution::Kind::Tabular: return "tabular";
    case Distribution::Kind::Gaussian: return "gaussian";
    case Distribution::Kind::Particle: return "particles";
  }
  return "unknown";
}

std::string_view to_string(Backend b) {
  switch (b) {
    case Backend::Auto: return "auto";
    case Backend::Exact: return "exact";
    case Backend::Gaussian: return "gaussian";
    case Backend::MonteCarlo: return "mc";
  }
  return "unknown";
}

namespace {

double sort_key(const Domain& d, double v) {
  if (d.is_finite()) {
    if (auto i = d.index_of(v)) return static_cast<double>(*i);
  }
  return v;
}

std::size_t require_index(const Distribution& d, const std::string& name) {
  if (auto i = d.index_of(name)) return *i;
  throw Error(ErrorKind::UnknownVariable, "distribution has no variable '" + name + "'");
}

}  // namespace

TabularDistribution make_tabular(std::vector<std::string> variables, std::vector<Domain> domains,
                                 std::vector<double> values, std::vector<double> weights) {
  const std::size_t k = variables.size();
  const std::size_t n = weights.size();
  if (domains.size() != k || values.size() != n * k) {
    throw Error(ErrorKind::ValidationError, "tabular shape mismatch");
  }
  std::vector<double> keys(n * k);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < k; ++j) {
      double& v = values[r * k + j];
      v = domains[j].snap(v);
      keys[r * k + j] = sort_key(domains[j], v);
    }
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  auto less = [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(keys.begin() + a * k, keys.begin() + (a + 1) * k,
                                        keys.begin() + b * k, keys.begin() + (b + 1) * k);
  };
  std::stable_sort(idx.begin(), idx.end(), less);

  TabularDistribution t;
  t.variables = std::move(variables);
  t.domains = std::move(domains);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = idx[i];
    if (weights[r] < 0.0 || !std::isfinite(weights[r])) {
      throw Error(ErrorKind::ValidationError, "negative or non-finite weight");
    }
    bool same = !t.weights.empty() && !less(idx[i - 1], r) && !less(r, idx[i - 1]);
    if (same) {
      t.weights.back() += weights[r];
    } else {
      t.values.insert(t.values.end(), values.begin() + r * k, values.begin() + (r + 1) * k);
      t.weights.push_back(weights[r]);
    }
    total += weights[r];
  }
  if (!(total > 0.0)) throw Error(ErrorKind::ZeroProbabilityEvidence, "event has probability 0");
  // Drop zero rows after merging.
  std::size_t out = 0;
  for (std::size_t r = 0; r < t.weights.size(); ++r) {
    if (t.weights[r] == 0.0) continue;
    if (out != r) {
      std::copy(t.values.begin() + r * k, t.values.begin() + (r + 1) * k,
                t.values.begin() + out * k);
    }
    t.weights[out++] = t.weights[r] / total;
  }
  t.weights.resize(out);
  t.values.resize(out * k);
  return t;
}

Distribution point_mass(const Assignment& a, const std::vector<Domain>& domains) {
  if (domains.size() != a.size()) throw Error(ErrorKind::ValidationError, "domain count mismatch");
  bool finite = std::all_of(domains.begin(), domains.end(), [](const Domain& d) { return d.is_finite(); });
  if (finite) {
    std::vector<double> vals;
    for (const auto& [n, v] : a) vals.push_back(v);
    return make_tabular(a.names(), domains, vals, {1.0});
  }
  GaussianDistribution g;
  g.variables = a.names();
  g.mean.resize(static_cast<Eigen::Index>(a.size()));
  Eigen::Index i = 0;
  for (const auto& [n, v] : a) g.mean(i++) = v;
  g.covariance = Eigen::MatrixXd::Zero(g.mean.size(), g.mean.size());
  return g;
}

double effective_sample_size(std::span<const double> weights) {
  double s = 0.0, s2 = 0.0;
  for (double w : weights) {
    s += w;
    s2 += w * w;
  }
  return s2 > 0.0 ? s * s / s2 : 0.0;
}

// ---------------------------------------------------------------------------
// Gaussian algebra

Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& sym) {
  if (sym.size() == 0) return sym;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (sym + sym.transpose()));
  const Eigen::VectorXd& lam = es.eigenvalues();
  double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
  double thr = 1e-12 * scale * static_cast<double>(sym.rows());
  Eigen::VectorXd inv(lam.size());
  for (Eigen::Index i = 0; i < lam.size(); ++i) inv(i) = lam(i) > thr ? 1.0 / lam(i) : 0.0;
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& cov) {
  if (cov.size() == 0) return cov;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (cov + cov.transpose()));
  Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal();
}

GaussianDistribution condition_gaussian(const GaussianDistribution& g, const Eigen::MatrixXd& C,
                                        const Eigen::VectorXd& d, ErrorKind on_inconsistent) {
  if (C.rows() == 0) return g;
  const Eigen::MatrixXd& S0 = g.covariance;
  Eigen::MatrixXd SCt = S0 * C.transpose();
  Eigen::MatrixXd S = C * SCt;
  Eigen::MatrixXd Sp = pseudo_inverse(S);
  Eigen::VectorXd r = d - C * g.mean;
  // r must lie in the range of S, otherwise the constraint has no support.
  Eigen::VectorXd miss = r - S * (Sp * r);
  double scale = 1.0 + d.norm() + (C * g.mean).norm();
  if (miss.norm() > 1e-8 * scale) {
    throw Error(on_inconsistent, "constraint is inconsistent with the distribution's support");
  }
  GaussianDistribution out;
  out.variables = g.variables;
  Eigen::MatrixXd K = SCt * Sp;
  out.mean = g.mean + K * r;
  Eigen::MatrixXd cov = S0 - K * SCt.transpose();
  out.covariance = 0.5 * (cov + cov.transpose());
  return out;
}

double gaussian_event_probability(const GaussianDistribution& g, const Eigen::MatrixXd& C,
                                  const Eigen::VectorXd& d) {
  if (C.rows() == 0) return 1.0;
  Eigen::MatrixXd S = C * g.covariance * C.transpose();
  double scale = 1.0 + d.norm() + (C * g.mean).norm();
  if (S.cwiseAbs().maxCoeff() > kSymmetryTolerance * scale) return 0.0;
  return (C * g.mean - d).norm() <= 1e-8 * scale ? 1.0 : 0.0;
}

double gaussian_log_density(const GaussianDistribution& g, const Eigen::VectorXd& x) {
  Eigen::LLT<Eigen::MatrixXd> llt(g.covariance);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::ValidationError, "density of a singular Gaussian");
  }
  Eigen::VectorXd z = llt.matrixL().solve(x - g.mean);
  double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  double k = static_cast<double>(x.size());
  return -0.5 * (z.squaredNorm() + logdet + k * std::log(2.0 * std::numbers::pi));
}

// ---------------------------------------------------------------------------
// sampling

namespace detail {

RowSampler::RowSampler(const Distribution& dist) : dist_(&dist), dim_(dist.variables().size()) {
  switch (dist.kind()) {
    case Distribution::Kind::Tabular:
    case Distribution::Kind::Particle: {
      const auto& w = dist.kind() == Distribution::Kind::Tabular ? dist.tabular().weights
                                                                 : dist.particles().weights;
      cdf_.resize(w.size());
      std::partial_sum(w.begin(), w.end(), cdf_.begin());
      break;
    }
    case Distribution::Kind::Gaussian: factor_ = psd_factor(dist.gaussian().covariance); break;
  }
}

void RowSampler::draw(CounterStream& stream, double* out) const {
  if (dist_->kind() == Distribution::Kind::Gaussian) {
    const auto& g = dist_->gaussian();
    Eigen::VectorXd z(static_cast<Eigen::Index>(dim_));
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = stream.normal();
    Eigen::VectorXd x = g.mean + factor_ * z;
    std::copy(x.data(), x.data() + dim_, out);
    return;
  }
  double u = stream.uniform() * cdf_.back();
  auto r = static_cast<std::size_t>(std::upper_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin());
  r = std::min(r, cdf_.size() - 1);
  auto row = dist_->kind() == Distribution::Kind::Tabular ? dist_->tabular().row(r)
                                                          : dist_->particles().row(r);
  std::copy(row.begin(), row.end(), out);
}

std::vector<double> sample_rows(const Distribution& dist, std::size_t n, std::uint64_t seed,
                                unsigned workers) {
  RowSampler sampler(dist);
  std::vector<double> out(n * sampler.dim());
  parallel_chunks(n, workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      CounterStream s(seed, i);
      sampler.draw(s, out.data() + i * sampler.dim());
    }
  });
  return out;
}

}  // namespace detail

std::vector<Assignment> sample(const Distribution& dist, std::size_t n, std::uint64_t seed) {
  auto rows = detail::sample_rows(dist, n, seed, 1);
  const auto& vars = dist.variables();
  std::vector<Assignment> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < vars.size(); ++j) out[i].set(vars[j], rows[i * vars.size() + j]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// pushforward

namespace {

// Prior variable index for every exogenous slot of the model.
std::vector<std::size_t> prior_layout(const CausalModel& model, const Distribution& prior) {
  const auto& vars = prior.variables();
  if (vars.size() != model.exogenous().size()) {
    throw Error(ErrorKind::ValidationError,
                "prior must cover exactly the exogenous variables of the model");
  }
  std::vector<std::size_t> layout;
  for (const auto& d : model.exogenous()) {
    auto i = prior.index_of(d.name);
    if (!i) {
      throw Error(ErrorKind::ValidationError, "prior has no factor for '" + d.name + "'");
    }
    layout.push_back(*i);
  }
  return layout;
}

std::vector<std::size_t> target_slots(const CausalModel& model,
                                      const std::vector<std::string>& targets) {
  std::vector<std::size_t> out;
  for (const auto& t : targets) out.push_back(model.slot_of(t));
  return out;
}

std::vector<Domain> target_domains(const CausalModel& model,
                                   const std::vector<std::string>& targets) {
  std::vector<Domain> out;
  for (const auto& t : targets) out.push_back(model.domain(t));
  return out;
}

ParticleDistribution particle_pushforward(const CausalModel& model, const Distribution& prior,
                                          const std::vector<std::string>& targets,
                                          const EngineOptions& options) {
  auto layout = prior_layout(model, prior);
  auto slots_of_targets = target_slots(model, targets);
  const std::size_t m = layout.size();
  ParticleDistribution p;
  p.variables = targets;
  p.seed = options.seed;
  std::vector<double> rows;
  std::vector<double> weights;
  if (prior.kind() == Distribution::Kind::Particle) {
    rows = prior.particles().values;
    weights = prior.particles().weights;
  } else {
    rows = detail::sample_rows(prior, options.samples, options.seed, options.workers);
    weights.assign(options.samples, 1.0 / static_cast<double>(options.samples));
  }
  const std::size_t n = weights.size();
  p.values.resize(n * targets.size());
  detail::parallel_chunks(n, options.workers, [&](std::size_t begin, std::size_t end) {
    std::vector<double> slots(model.slot_count());
    for (std::size_t i = begin; i < end; ++i) {
      for (std::size_t j = 0; j < m; ++j) slots[j] = rows[i * m + layout[j]];
      model.solve_slots(slots);
      for (std::size_t k = 0; k < targets.size(); ++k) {
        p.values[i * targets.size() + k] = slots[slots_of_targets[k]];
      }
    }
  });
  p.weights = std::move(weights);
  p.ess = effective_sample_size(p.weights);
  return p;
}

}  // namespace

Distribution endogenous_distribution(const CausalModel& model, const Distribution& prior,
                                     const std::vector<std::string>& targets,
                                     const EngineOptions& options) {
  model.validate();
  auto layout = prior_layout(model, prior);
  auto slots_of_targets = target_slots(model, targets);
  const std::size_t m = layout.size();

  if (prior.kind() == Distribution::Kind::Tabular &&
      (options.backend == Backend::Auto || options.backend == Backend::Exact)) {
    const auto& t = prior.tabular();
    std::vector<double> values(t.rows() * targets.size());
    std::vector<double> slots(model.slot_count());
    for (std::size_t r = 0; r < t.rows(); ++r) {
      auto row = t.row(r);
      for (std::size_t j = 0; j < m; ++j) slots[j] = row[layout[j]];
      model.solve_slots(slots);
      for (std::size_t k = 0; k < targets.size(); ++k) {
        values[r * targets.size() + k] = slots[slots_of_targets[k]];
      }
    }
    return make_tabular(targets, target_domains(model, targets), std::move(values), t.weights);
  }

  if (prior.kind() == Distribution::Kind::Gaussian &&
      (options.backend == Backend::Auto || options.backend == Backend::Gaussian)) {
    if (auto form = affine_reduced_form(model)) {
      const auto& g = prior.gaussian();
      Eigen::VectorXd mu(static_cast<Eigen::Index>(m));
      Eigen::MatrixXd sigma(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
      for (std::size_t a = 0; a < m; ++a) {
        mu(static_cast<Eigen::Index>(a)) = g.mean(static_cast<Eigen::Index>(layout[a]));
        for (std::size_t b = 0; b < m; ++b) {
          sigma(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
              g.covariance(static_cast<Eigen::Index>(layout[a]), static_cast<Eigen::Index>(layout[b]));
        }
      }
      const auto k = static_cast<Eigen::Index>(targets.size());
      Eigen::MatrixXd T = Eigen::MatrixXd::Zero(k, static_cast<Eigen::Index>(m));
      Eigen::VectorXd off = Eigen::VectorXd::Zero(k);
      for (Eigen::Index i = 0; i < k; ++i) {
        const auto& name = targets[static_cast<std::size_t>(i)];
        if (auto u = model.exogenous_index(name)) {
          T(i, static_cast<Eigen::Index>(*u)) = 1.0;
        } else {
          auto v = static_cast<Eigen::Index>(*model.endogenous_index(name));
          T.row(i) = form->A.row(v);
          off(i) = form->b(v);
        }
      }
      GaussianDistribution out;
      out.variables = targets;
      out.mean = T * mu + off;
      out.covariance = T * sigma * T.transpose();
      return out;
    }
    if (options.backend == Backend::Gaussian) {
      throw Error(ErrorKind::UnsupportedBackend,
                  "the Gaussian backend needs affine laws over real-valued variables");
    }
  }

  if (options.backend == Backend::Auto || options.backend == Backend::MonteCarlo) {
    return particle_pushforward(model, prior, targets, options);
  }
  throw Error(ErrorKind::UnsupportedBackend,
              std::string("backend '") + std::string(to_string(options.backend)) +
                  "' cannot handle a " + std::string(to_string(prior.kind())) + " prior for this model");
}

// ---------------------------------------------------------------------------
// conditioning and marginals

namespace {

template <class Rows>
std::vector<std::size_t> matching_rows(const Rows& rows, std::size_t n,
                                       const std::vector<std::pair<std::size_t, double>>& ev) {
  std::vector<std::size_t> keep;
  for (std::size_t r = 0; r < n; ++r) {
    auto row = rows.row(r);
    bool ok = std::all_of(ev.begin(), ev.end(), [&](const auto& e) {
      return std::abs(row[e.first] - e.second) <= kValueTolerance;
    });
    if (ok) keep.push_back(r);
  }
  return keep;
}

Distribution filter_rows(const Distribution& dist, const std::vector<std::size_t>& keep) {
  if (dist.kind() == Distribution::Kind::Tabular) {
    const auto& t = dist.tabular();
    std::vector<double> values, weights;
    for (std::size_t r : keep) {
      auto row = t.row(r);
      values.insert(values.end(), row.begin(), row.end());
      weights.push_back(t.weights[r]);
    }
    return make_tabular(t.variables, t.domains, std::move(values), std::move(weights));
  }
  const auto& p = dist.particles();
  ParticleDistribution out;
  out.variables = p.variables;
  out.seed = p.seed;
  out.diagnostics = p.diagnostics;
  double total = 0.0;
  for (std::size_t r : keep) total += p.weights[r];
  if (!(total > 0.0)) {
    throw Error(ErrorKind::ZeroProbabilityEvidence, "no particle satisfies the evidence");
  }
  for (std::size_t r : keep) {
    auto row = p.row(r);
    out.values.insert(out.values.end(), row.begin(), row.end());
    out.weights.push_back(p.weights[r] / total);
  }
  out.ess = effective_sample_size(out.weights);
  return out;
}

}  // namespace

Distribution condition_on(const Distribution& dist, const Assignment& evidence) {
  if (evidence.empty()) return dist;
  std::vector<std::pair<std::size_t, double>> ev;
  for (const auto& [name, value] : evidence) ev.emplace_back(require_index(dist, name), value);
  switch (dist.kind()) {
    case Distribution::Kind::Tabular: {
      auto keep = matching_rows(dist.tabular(), dist.tabular().rows(), ev);
      if (keep.empty()) {
        throw Error(ErrorKind::ZeroProbabilityEvidence,
                    "evidence " + to_string(evidence) + " has probability 0");
      }
      return filter_rows(dist, keep);
    }
    case Distribution::Kind::Particle: {
      auto keep = matching_rows(dist.particles(), dist.particles().rows(), ev);
      return filter_rows(dist, keep);
    }
    case Distribution::Kind::Gaussian: {
      const auto n = static_cast<Eigen::Index>(dist.variables().size());
      Eigen::MatrixXd C = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ev.size()), n);
      Eigen::VectorXd d(static_cast<Eigen::Index>(ev.size()));
      for (std::size_t i = 0; i < ev.size(); ++i) {
        C(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(ev[i].first)) = 1.0;
        d(static_cast<Eigen::Index>(i)) = ev[i].second;
      }
      return condition_gaussian(dist.gaussian(), C, d, ErrorKind::ZeroProbabilityEvidence);
    }
  }
  return dist;
}

Distribution condition_on(const Distribution& dist, const LinearConstraint& constraint) {
  const auto n = static_cast<Eigen::Index>(dist.variables().size());
  if (constraint.C.cols() != n || constraint.C.rows() != constraint.d.size()) {
    throw Error(ErrorKind::ValidationError, "constraint shape does not match the distribution");
  }
  if (dist.kind() == Distribution::Kind::Gaussian) {
    return condition_gaussian(dist.gaussian(), constraint.C, constraint.d,
                              ErrorKind::ZeroProbabilityEvidence);
  }
  auto satisfied = [&](std::span<const double> row) {
    Eigen::Map<const Eigen::VectorXd> x(row.data(), n);
    return ((constraint.C * x - constraint.d).cwiseAbs().array() <= kValueTolerance).all();
  };
  std::vector<std::size_t> keep;
  std::size_t rows = dist.kind() == Distribution::Kind::Tabular ? dist.tabular().rows()
                                                                : dist.particles().rows();
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = dist.kind() == Distribution::Kind::Tabular ? dist.tabular().row(r)
                                                          : dist.particles().row(r);
    if (satisfied(row)) keep.push_back(r);
  }
  if (keep.empty()) throw Error(ErrorKind::ZeroProbabilityEvidence, "constraint has probability 0");
  return filter_rows(dist, keep);
}

Distribution marginalise(const Distribution& dist, const std::vector<std::string>& keep) {
  std::vector<std::size_t> idx;
  for (const auto& k : keep) idx.push_back(require_index(dist, k));
  switch (dist.kind()) {
    case Distribution::Kind::Tabular: {
      const auto& t = dist.tabular();
      std::vector<Domain> doms;
      for (std::size_t i : idx) doms.push_back(t.domains[i]);
      std::vector<double> values;
      values.reserve(t.rows() * idx.size());
      for (std::size_t r = 0; r < t.rows(); ++r) {
        auto row = t.row(r);
        for (std::size_t i : idx) values.push_back(row[i]);
      }
      return make_tabular(keep, std::move(doms), std::move(values), t.weights);
    }
    case Distribution::Kind::Gaussian: {
      const auto& g = dist.gaussian();
      const auto k = static_cast<Eigen::Index>(idx.size());
      GaussianDistribution out;
      out.variables = keep;
      out.mean.resize(k);
      out.covariance.resize(k, k);
      for (Eigen::Index a = 0; a < k; ++a) {
        auto ia = static_cast<Eigen::Index>(idx[static_cast<std::size_t>(a)]);
        out.mean(a) = g.mean(ia);
        for (Eigen::Index b = 0; b < k; ++b) {
          out.covariance(a, b) = g.covariance(ia, static_cast<Eigen::Index>(idx[static_cast<std::size_t>(b)]));
        }
      }
      return out;
    }
    case Distribution::Kind::Particle: {
      const auto& p = dist.particles();
      ParticleDistribution out = p;
      out.variables = keep;
      out.values.clear();
      out.values.reserve(p.rows() * idx.size());
      for (std::size_t r = 0; r < p.rows(); ++r) {
        auto row = p.row(r);
        for (std::size_t i : idx) out.values.push_back(row[i]);
      }
      return out;
    }
  }
  return dist;
}

Distribution reorder(const Distribution& dist, const std::vector<std::string>& order) {
  if (order.size() != dist.variables().size()) {
    throw Error(ErrorKind::ValidationError, "reorder needs a permutation of the variables");
  }
  return marginalise(dist, order);
}

Distribution rename(const Distribution& dist, std::vector<std::string> names) {
  if (names.size() != dist.variables().size()) {
    throw Error(ErrorKind::ValidationError, "rename needs one name per variable");
  }
  switch (dist.kind()) {
    case Distribution::Kind::Tabular: {
      auto t = dist.tabular();
      t.variables = std::move(names);
      return t;
    }
    case Distribution::Kind::Gaussian: {
      auto g = dist.gaussian();
      g.variables = std::move(names);
      return g;
    }
    case Distribution::Kind::Particle: {
      auto p = dist.particles();
      p.variables = std::move(names);
      return p;
    }
  }
  return dist;
}

namespace {

bool is_point_gaussian(const Distribution& d) {
  return d.kind() == Distribution::Kind::Gaussian &&
         d.gaussian().covariance.cwiseAbs().maxCoeff() <= kSymmetryTolerance;
}

TabularDistribution as_tabular(const Distribution& d) {
  if (d.kind() == Distribution::Kind::Tabular) return d.tabular();
  const auto& g = d.gaussian();
  std::vector<Domain> doms(g.variables.size(), Domain::real());
  std::vector<double> vals(g.mean.data(), g.mean.data() + g.mean.size());
  return make_tabular(g.variables, std::move(doms), std::move(vals), {1.0});
}

}  // namespace

Distribution product(const Distribution& a, const Distribution& b) {
  for (const auto& v : a.variables()) {
    if (b.index_of(v)) {
      throw Error(ErrorKind::OverlappingVariables, "both factors contain '" + v + "'");
    }
  }
  std::vector<std::string> vars = a.variables();
  vars.insert(vars.end(), b.variables().begin(), b.variables().end());

  if (a.kind() == Distribution::Kind::Gaussian && b.kind() == Distribution::Kind::Gaussian) {
    const auto& ga = a.gaussian();
    const auto& gb = b.gaussian();
    const auto na = ga.mean.size();
    const auto nb = gb.mean.size();
    GaussianDistribution out;
    out.variables = vars;
    out.mean.resize(na + nb);
    out.mean << ga.mean, gb.mean;
    out.covariance = Eigen::MatrixXd::Zero(na + nb, na + nb);
    out.covariance.topLeftCorner(na, na) = ga.covariance;
    out.covariance.bottomRightCorner(nb, nb) = gb.covariance;
    return out;
  }
  auto tabular_like = [](const Distribution& d) {
    return d.kind() == Distribution::Kind::Tabular || is_point_gaussian(d);
  };
  if (!tabular_like(a) || !tabular_like(b)) {
    throw Error(ErrorKind::UnsupportedBackend, std::string("no exact product of ") +
                                                   std::string(to_string(a.kind())) + " and " +
                                                   std::string(to_string(b.kind())));
  }
  auto ta = as_tabular(a);
  auto tb = as_tabular(b);
  std::vector<Domain> doms = ta.domains;
  doms.insert(doms.end(), tb.domains.begin(), tb.domains.end());
  std::vector<double> values, weights;
  for (std::size_t i = 0; i < ta.rows(); ++i) {
    for (std::size_t j = 0; j < tb.rows(); ++j) {
      auto ra = ta.row(i);
      auto rb = tb.row(j);
      values.insert(values.end(), ra.begin(), ra.end());
      values.insert(values.end(), rb.begin(), rb.end());
      weights.push_back(ta.weights[i] * tb.weights[j]);
    }
  }
  return make_tabular(std::move(vars), std::move(doms), std::move(values), std::move(weights));
}

Distribution observational_query(const CausalModel& model, const Distribution& prior,
                                 const Assignment& evidence,
                                 const std::vector<std::string>& targets,
                                 const EngineOptions& options) {
  std::vector<std::string> vars = targets;
  for (const auto& name : evidence.names()) {
    if (std::find(vars.begin(), vars.end(), name) == vars.end()) vars.push_back(name);
  }
  for (const auto& [name, value] : evidence) {
    if (!model.domain(name).contains(value)) {
      throw Error(ErrorKind::DomainMismatch,
                  format_number(value) + " is outside the domain of '" + name + "'");
    }
  }
  auto joint = endogenous_distribution(model, prior, vars, options);
  return marginalise(condition_on(joint, evidence), targets);
}

double total_variation(const TabularDistribution& a, const TabularDistribution& b) {
  if (a.variables != b.variables) {
    throw Error(ErrorKind::ValidationError, "total variation needs identical variable lists");
  }
  std::map<std::vector<double>, std::pair<double, double>> acc;
  for (std::size_t r = 0; r < a.rows(); ++r) {
    auto row = a.row(r);
    acc[{row.begin(), row.end()}].first += a.weights[r];
  }
  for (std::size_t r = 0; r < b.rows(); ++r) {
    auto row = b.row(r);
    acc[{row.begin(), row.end()}].second += b.weights[r];
  }
  double tv = 0.0;
  for (const auto& [k, pq] : acc) tv += std::abs(pq.first - pq.second);
  return 0.5 * tv;
}

double probability(const TabularDistribution& t, const Assignment& event) {
  std::vector<std::pair<std::size_t, double>> ev;
  for (const auto& [name, value] : event) {
    auto it = std::find(t.variables.begin(), t.variables.end(), name);
    if (it == t.variables.end()) {
      throw Error(ErrorKind::UnknownVariable, "distribution has no variable '" + name + "'");
    }
    ev.emplace_back(static_cast<std::size_t>(it - t.variables.begin()), value);
  }
  double p = 0.0;
  for (std::size_t r : matching_rows(t, t.rows(), ev)) p += t.weights[r];
  return p;
}

Moments moments(const Distribution& dist) {
  if (dist.kind() == Distribution::Kind::Gaussian) {
    return {dist.gaussian().mean, dist.gaussian().covariance};
  }
  const auto k = static_cast<Eigen::Index>(dist.variables().size());
  const bool tab = dist.kind() == Distribution::Kind::Tabular;
  const std::size_t rows = tab ? dist.tabular().rows() : dist.particles().rows();
  const auto& w = tab ? dist.tabular().weights : dist.particles().weights;
  Moments m{Eigen::VectorXd::Zero(k), Eigen::MatrixXd::Zero(k, k)};
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = tab ? dist.tabular().row(r) : dist.particles().row(r);
    m.mean += w[r] * Eigen::Map<const Eigen::VectorXd>(row.data(), k);
  }
  for (std::size_t r = 0; r < rows; ++r) {
    auto row = tab ? dist.tabular().row(r) : dist.particles().row(r);
    Eigen::VectorXd c = Eigen::Map<const Eigen::VectorXd>(row.data(), k) - m.mean;
    m.covariance += w[r] * c * c.transpose();
  }
  return m;
}

}  // namespace scmcf
