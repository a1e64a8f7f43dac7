#include "scmcf/kernel.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>

#include "sampling.hpp"
#include "scmcf/error.hpp"

namespace scmcf {

namespace {

constexpr std::size_t kMaxFiniteSpace = std::size_t{1} << 22;
constexpr std::size_t kMaxCheckedSpace = 2048;
constexpr double kFormTolerance = 1e-9;
constexpr double kQuadratureTolerance = 1e-6;
constexpr std::size_t kMaxNestedQuadratureDims = 3;

[[noreturn]] void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

bool symmetric_pd(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  if (!m.allFinite()) return false;
  double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  return es.eigenvalues().minCoeff() > 0.0;
}

bool near_identity(const Eigen::MatrixXd& k) {
  return (k - Eigen::MatrixXd::Identity(k.rows(), k.cols())).cwiseAbs().maxCoeff() <= kFormTolerance;
}

bool near_diagonal(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd off = m;
  off.diagonal().setZero();
  double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return off.cwiseAbs().maxCoeff() <= kFormTolerance * scale;
}

double term_value(const DistanceTerm& t, double a, double b) {
  double delta = a - b;
  switch (t.kind) {
    case DistanceTerm::Kind::Squared: return delta * delta / (2.0 * t.scale * t.scale);
    case DistanceTerm::Kind::Absolute: return t.scale * std::abs(delta);
    case DistanceTerm::Kind::Mismatch: return std::abs(delta) > kValueTolerance ? t.scale : 0.0;
  }
  return 0.0;
}

double gauss_kronrod(const std::function<double(double)>& f, double lo, double hi) {
  using Quad = boost::math::quadrature::gauss_kronrod<double, 31>;
  return Quad::integrate(f, lo, hi, 15, kQuadratureTolerance);
}

// Splits [lo, hi] at the kink so the integrand is smooth on each piece.
double integrate_with_kink(const std::function<double(double)>& f, double lo, double hi,
                           double kink) {
  if (kink > lo && kink < hi) return gauss_kronrod(f, lo, kink) + gauss_kronrod(f, kink, hi);
  return gauss_kronrod(f, lo, hi);
}

std::vector<double> normalized_from_log(std::vector<double> logw) {
  double top = -std::numeric_limits<double>::infinity();
  for (double l : logw) top = std::max(top, l);
  if (!std::isfinite(top)) fail(ErrorKind::InvalidKernel, "kernel assigns zero mass to every world");
  double total = 0.0;
  for (double& l : logw) {
    l = std::exp(l - top);
    total += l;
  }
  for (double& l : logw) l /= total;
  return logw;
}

}  // namespace

std::string starred(const std::string& name) { return name + "*"; }

bool DistanceSpec::operator==(const DistanceSpec& other) const {
  if (terms != other.terms) return false;
  if (covariance.has_value() != other.covariance.has_value()) return false;
  return !covariance || (covariance->rows() == other.covariance->rows() &&
                         covariance->cols() == other.covariance->cols() &&
                         *covariance == *other.covariance);
}

bool KernelSpec::operator==(const KernelSpec& other) const {
  bool same_sigma = sigma.rows() == other.sigma.rows() && sigma.cols() == other.sigma.cols() &&
                    (sigma.size() == 0 || sigma == other.sigma);
  return kind == other.kind && distance == other.distance && same_sigma && alpha == other.alpha &&
         beta == other.beta && stability == other.stability && declared == other.declared;
}

std::string_view to_string(KernelKind k) {
  switch (k) {
    case KernelKind::SharedWorlds: return "shared";
    case KernelKind::PriorIndependent: return "prior_independent";
    case KernelKind::DistanceBased: return "distance";
    case KernelKind::GaussianKernel: return "gaussian";
    case KernelKind::GeneralizedPriorDistance: return "generalized";
    case KernelKind::StabilityMixture: return "stability";
  }
  return "?";
}

std::string_view to_string(KernelProperty p) {
  switch (p) {
    case KernelProperty::Closeness: return "closeness";
    case KernelProperty::Symmetry: return "symmetry";
    case KernelProperty::Decomposability: return "decomposability";
  }
  return "?";
}

BacktrackingConditional BacktrackingConditional::bind(const KernelSpec& spec,
                                                      const std::vector<VariableDecl>& exogenous,
                                                      const Distribution& prior) {
  BacktrackingConditional k;
  k.spec_ = spec;
  k.exogenous_ = exogenous;
  const std::size_t m = exogenous.size();

  std::vector<std::string> names;
  for (const auto& d : exogenous) names.push_back(d.name);
  {
    auto pv = prior.variables();
    auto sorted_names = names;
    std::sort(pv.begin(), pv.end());
    std::sort(sorted_names.begin(), sorted_names.end());
    if (pv != sorted_names)
      fail(ErrorKind::ValidationError, "prior must cover exactly the exogenous variables");
  }
  k.prior_ = reorder(prior, names);

  std::size_t finite_count = 0;
  for (const auto& d : exogenous)
    if (d.domain.kind() == Domain::Kind::Finite) ++finite_count;
  if (finite_count != 0 && finite_count != m)
    fail(ErrorKind::UnsupportedBackend, "kernels over mixed finite and continuous exogenous domains");
  k.finite_ = finite_count == m;

  auto index_of_name = [&](const std::string& n) -> std::size_t {
    auto it = std::find(names.begin(), names.end(), n);
    if (it == names.end()) fail(ErrorKind::UnknownVariable, "distance term for unknown variable " + n);
    return static_cast<std::size_t>(it - names.begin());
  };

  // Distance bookkeeping shared by the distance-driven kinds.
  std::vector<bool> covered(m, false);
  if (spec.kind == KernelKind::DistanceBased || spec.kind == KernelKind::GeneralizedPriorDistance) {
    for (const auto& t : spec.distance.terms) {
      std::size_t j = index_of_name(t.variable);
      if (!(t.scale > 0.0) || !std::isfinite(t.scale))
        fail(ErrorKind::InvalidKernel, "distance scale for " + t.variable + " must be positive");
      if (t.kind == DistanceTerm::Kind::Mismatch && !k.finite_)
        fail(ErrorKind::InvalidKernel, "mismatch distance on continuous variable " + t.variable);
      covered[j] = true;
      k.terms_.emplace_back(j, t);
    }
    if (spec.distance.covariance) {
      if (spec.distance.covariance->rows() != static_cast<Eigen::Index>(m) ||
          !symmetric_pd(*spec.distance.covariance))
        fail(ErrorKind::InvalidKernel, "distance covariance must be symmetric positive definite of size " +
                                           std::to_string(m));
      k.distance_precision_ = spec.distance.covariance->inverse();
      k.has_distance_precision_ = true;
      std::fill(covered.begin(), covered.end(), true);
    }
    for (std::size_t j = 0; j < m; ++j)
      if (!covered[j])
        fail(ErrorKind::InvalidKernel,
             "distance does not involve " + names[j] + ", so distinct worlds can be at distance zero");
  }
  if (spec.kind == KernelKind::GaussianKernel) {
    if (spec.sigma.rows() != static_cast<Eigen::Index>(m) || !symmetric_pd(spec.sigma))
      fail(ErrorKind::InvalidKernel,
           "gaussian kernel covariance must be symmetric positive definite of size " + std::to_string(m));
    k.distance_precision_ = spec.sigma.inverse();
    k.has_distance_precision_ = true;
  }
  if (spec.kind == KernelKind::GeneralizedPriorDistance) {
    if (!(spec.alpha >= 0.0) || !(spec.beta >= 0.0) || !std::isfinite(spec.alpha) ||
        !std::isfinite(spec.beta))
      fail(ErrorKind::InvalidKernel, "alpha and beta must be finite and nonnegative");
  }
  if (spec.kind == KernelKind::StabilityMixture) {
    if (!k.finite_) fail(ErrorKind::InvalidKernel, "stability mixtures need finite domains");
    if (spec.stability.size() == 1) {
      k.stability_.assign(m, spec.stability[0]);
    } else if (spec.stability.size() == m) {
      k.stability_ = spec.stability;
    } else {
      fail(ErrorKind::InvalidKernel, "stability needs one value or one per exogenous variable");
    }
    for (double s : k.stability_)
      if (!(s >= 0.0 && s <= 1.0)) fail(ErrorKind::InvalidKernel, "stability must lie in [0, 1]");
  }

  if (k.finite_) {
    if (k.prior_.kind() != Distribution::Kind::Tabular)
      fail(ErrorKind::UnsupportedBackend, "finite kernels need a tabular prior");
    std::size_t n = 1;
    for (const auto& d : exogenous) {
      k.radix_.push_back(d.domain.size());
      if (n > kMaxFiniteSpace / d.domain.size())
        fail(ErrorKind::UnsupportedBackend, "exogenous space too large to enumerate");
      n *= d.domain.size();
    }
    k.prior_dense_.assign(n, 0.0);
    k.prior_marginals_.resize(m);
    for (std::size_t j = 0; j < m; ++j) k.prior_marginals_[j].assign(k.radix_[j], 0.0);
    const auto& t = k.prior_.tabular();
    for (std::size_t r = 0; r < t.rows(); ++r) {
      auto row = t.row(r);
      std::size_t flat = k.encode(row);
      k.prior_dense_[flat] += t.weights[r];
      for (std::size_t j = 0; j < m; ++j)
        k.prior_marginals_[j][*exogenous[j].domain.index_of(row[j])] += t.weights[r];
    }
  } else {
    bool real_line = std::all_of(exogenous.begin(), exogenous.end(), [](const VariableDecl& d) {
      return d.domain.kind() == Domain::Kind::Real;
    });
    bool quadratic = std::all_of(k.terms_.begin(), k.terms_.end(), [](const auto& jt) {
      return jt.second.kind == DistanceTerm::Kind::Squared;
    });
    const bool gaussian_prior = k.prior_.kind() == Distribution::Kind::Gaussian;
    if (!gaussian_prior)
      fail(ErrorKind::UnsupportedBackend, "continuous kernels need a Gaussian prior");
    const auto& g = k.prior_.gaussian();
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(m, m);

    // Quadratic distance precision Q with d = 0.5 delta^T Q delta.
    Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(m, m);
    if (k.has_distance_precision_) Q = k.distance_precision_;
    for (const auto& [j, t] : k.terms_)
      if (t.kind == DistanceTerm::Kind::Squared) Q(j, j) += 1.0 / (t.scale * t.scale);

    GaussianKernelForm form;
    switch (spec.kind) {
      case KernelKind::SharedWorlds:
        form = {I, Eigen::VectorXd::Zero(m), Eigen::MatrixXd::Zero(m, m)};
        k.gaussian_ = form;
        break;
      case KernelKind::PriorIndependent:
        form = {Eigen::MatrixXd::Zero(m, m), g.mean, g.covariance};
        k.gaussian_ = form;
        break;
      case KernelKind::GaussianKernel:
        form = {I, Eigen::VectorXd::Zero(m), spec.sigma};
        k.gaussian_ = form;
        break;
      case KernelKind::DistanceBased:
        if (real_line && quadratic) {
          Eigen::MatrixXd S = Q.inverse();
          k.gaussian_ = GaussianKernelForm{I, Eigen::VectorXd::Zero(m), 0.5 * (S + S.transpose())};
        }
        break;
      case KernelKind::GeneralizedPriorDistance: {
        if (spec.alpha > 0.0 && !symmetric_pd(g.covariance))
          fail(ErrorKind::InvalidKernel, "a prior exponent needs a nonsingular prior covariance");
        if (spec.alpha == 0.0 && spec.beta == 0.0 && real_line)
          fail(ErrorKind::UnboundedNormalizer, "alpha = beta = 0 gives a flat kernel on the real line");
        if (real_line && (quadratic || spec.beta == 0.0)) {
          Eigen::MatrixXd prior_precision =
              spec.alpha > 0.0 ? Eigen::MatrixXd(g.covariance.inverse()) : Eigen::MatrixXd::Zero(m, m);
          Eigen::MatrixXd P = spec.alpha * prior_precision + spec.beta * Q;
          Eigen::MatrixXd S = P.inverse();
          S = 0.5 * (S + S.transpose());
          k.gaussian_ = GaussianKernelForm{spec.beta * S * Q, spec.alpha * S * prior_precision * g.mean, S};
        }
        break;
      }
      case KernelKind::StabilityMixture: break;
    }
    if (k.gaussian_) {
      k.sample_factor_ = psd_factor(k.gaussian_->S);
    } else {
      for (const auto& d : exogenous)
        if (d.domain.kind() != Domain::Kind::Interval)
          fail(ErrorKind::UnboundedNormalizer,
               std::string(to_string(spec.kind)) + " kernel on unbounded domain of " + d.name);
      bool factorizes = !k.has_distance_precision_ &&
                        (spec.kind == KernelKind::DistanceBased || spec.alpha == 0.0 ||
                         near_diagonal(g.covariance));
      if (!factorizes && m > kMaxNestedQuadratureDims)
        fail(ErrorKind::UnsupportedBackend, "non-factorizing continuous kernel over more than " +
                                                std::to_string(kMaxNestedQuadratureDims) + " variables");
    }
  }

  for (KernelProperty p : spec.declared) {
    bool holds = false;
    switch (p) {
      case KernelProperty::Closeness: holds = check_closeness(k); break;
      case KernelProperty::Symmetry: holds = check_symmetry(k); break;
      case KernelProperty::Decomposability: holds = check_decomposability(k); break;
    }
    if (!holds)
      fail(ErrorKind::PropertyMismatch, std::string(to_string(spec.kind)) + " kernel declared " +
                                            std::string(to_string(p)) + " but the check fails");
  }
  return k;
}

std::size_t BacktrackingConditional::space_size() const {
  if (!finite_) fail(ErrorKind::UnsupportedBackend, "continuous kernel has no finite space");
  return prior_dense_.size();
}

void BacktrackingConditional::decode(std::size_t flat, double* out) const {
  for (std::size_t j = radix_.size(); j-- > 0;) {
    out[j] = exogenous_[j].domain.values()[flat % radix_[j]];
    flat /= radix_[j];
  }
}

std::size_t BacktrackingConditional::encode(std::span<const double> u) const {
  std::size_t flat = 0;
  for (std::size_t j = 0; j < radix_.size(); ++j) {
    auto idx = exogenous_[j].domain.index_of(u[j]);
    if (!idx)
      fail(ErrorKind::DomainMismatch, "value " + format_number(u[j]) + " outside the domain of " +
                                          exogenous_[j].name);
    flat = flat * radix_[j] + *idx;
  }
  return flat;
}

double BacktrackingConditional::distance(std::span<const double> a, std::span<const double> b) const {
  double d = 0.0;
  for (const auto& [j, t] : terms_) d += term_value(t, a[j], b[j]);
  if (has_distance_precision_) {
    Eigen::VectorXd delta(a.size());
    for (std::size_t j = 0; j < a.size(); ++j) delta[j] = a[j] - b[j];
    d += 0.5 * delta.dot(distance_precision_ * delta);
  }
  return d;
}

std::vector<double> BacktrackingConditional::row(std::size_t u_flat) const {
  const std::size_t n = space_size();
  const std::size_t m = exogenous_.size();
  std::vector<double> u(m), v(m);
  decode(u_flat, u.data());
  std::vector<double> out(n, 0.0);
  switch (spec_.kind) {
    case KernelKind::SharedWorlds: out[u_flat] = 1.0; return out;
    case KernelKind::PriorIndependent: return prior_dense_;
    case KernelKind::StabilityMixture: {
      std::vector<std::size_t> ui(m);
      for (std::size_t j = 0; j < m; ++j) ui[j] = *exogenous_[j].domain.index_of(u[j]);
      for (std::size_t flat = 0; flat < n; ++flat) {
        double p = 1.0;
        std::size_t rest = flat;
        for (std::size_t j = m; j-- > 0;) {
          std::size_t vj = rest % radix_[j];
          rest /= radix_[j];
          double s = stability_[j];
          p *= (vj == ui[j] ? s : 0.0) + (1.0 - s) * prior_marginals_[j][vj];
        }
        out[flat] = p;
      }
      return out;
    }
    case KernelKind::DistanceBased:
    case KernelKind::GaussianKernel:
    case KernelKind::GeneralizedPriorDistance: {
      const bool generalized = spec_.kind == KernelKind::GeneralizedPriorDistance;
      const double alpha = generalized ? spec_.alpha : 0.0;
      const double beta = generalized ? spec_.beta : 1.0;
      for (std::size_t flat = 0; flat < n; ++flat) {
        decode(flat, v.data());
        double logp = 0.0;
        if (alpha > 0.0)
          logp = prior_dense_[flat] > 0.0 ? alpha * std::log(prior_dense_[flat])
                                          : -std::numeric_limits<double>::infinity();
        out[flat] = logp - (beta > 0.0 ? beta * distance(v, u) : 0.0);
      }
      return normalized_from_log(std::move(out));
    }
  }
  return out;
}

double BacktrackingConditional::continuous_normalizer(std::span<const double> u) const {
  const std::size_t m = exogenous_.size();
  const bool generalized = spec_.kind == KernelKind::GeneralizedPriorDistance;
  const double alpha = generalized ? spec_.alpha : 0.0;
  const double beta = generalized ? spec_.beta : 1.0;
  const auto& g = prior_.gaussian();

  bool factorizes = !has_distance_precision_ && (alpha == 0.0 || near_diagonal(g.covariance));
  if (factorizes) {
    double z = 1.0;
    for (std::size_t j = 0; j < m; ++j) {
      const auto& dom = exogenous_[j].domain;
      auto f = [&, j](double x) {
        double d = 0.0;
        for (const auto& [i, t] : terms_)
          if (i == j) d += term_value(t, x, u[j]);
        double logp = 0.0;
        if (alpha > 0.0) {
          double var = g.covariance(j, j);
          double r = x - g.mean[j];
          logp = alpha * (-0.5 * r * r / var - 0.5 * std::log(2.0 * std::numbers::pi * var));
        }
        return std::exp(logp - beta * d);
      };
      z *= integrate_with_kink(f, dom.lo(), dom.hi(), u[j]);
    }
    return z;
  }

  std::vector<double> x(m);
  std::function<double(std::size_t)> nested = [&](std::size_t j) -> double {
    if (j == m) {
      double logp = 0.0;
      if (alpha > 0.0) logp = alpha * gaussian_log_density(g, Eigen::Map<Eigen::VectorXd>(x.data(), m));
      return std::exp(logp - beta * distance(x, u));
    }
    const auto& dom = exogenous_[j].domain;
    auto f = [&, j](double xj) {
      x[j] = xj;
      return nested(j + 1);
    };
    return integrate_with_kink(f, dom.lo(), dom.hi(), u[j]);
  };
  return nested(0);
}

double BacktrackingConditional::density(std::span<const double> u_star,
                                        std::span<const double> u) const {
  const std::size_t m = exogenous_.size();
  if (u_star.size() != m || u.size() != m)
    fail(ErrorKind::IncompleteAssignment, "kernel density needs values for every exogenous variable");
  if (finite_) return row(encode(u))[encode(u_star)];

  for (std::size_t j = 0; j < m; ++j)
    if (!exogenous_[j].domain.contains(u[j]))
      fail(ErrorKind::DomainMismatch, "value outside the domain of " + exogenous_[j].name);

  if (gaussian_) {
    if (spec_.kind == KernelKind::SharedWorlds)
      fail(ErrorKind::InvalidKernel, "shared-worlds kernel on continuous domains has no density");
    Eigen::Map<const Eigen::VectorXd> uu(u.data(), m), us(u_star.data(), m);
    GaussianDistribution cond{{}, gaussian_->K * uu + gaussian_->c, gaussian_->S};
    return std::exp(gaussian_log_density(cond, us));
  }

  for (std::size_t j = 0; j < m; ++j)
    if (!exogenous_[j].domain.contains(u_star[j])) return 0.0;
  const bool generalized = spec_.kind == KernelKind::GeneralizedPriorDistance;
  const double alpha = generalized ? spec_.alpha : 0.0;
  const double beta = generalized ? spec_.beta : 1.0;
  double logp = 0.0;
  if (alpha > 0.0)
    logp = alpha * gaussian_log_density(prior_.gaussian(), Eigen::Map<const Eigen::VectorXd>(u_star.data(), m));
  return std::exp(logp - beta * distance(u_star, u)) / continuous_normalizer(u);
}

bool BacktrackingConditional::can_sample() const { return finite_ || gaussian_.has_value(); }

void BacktrackingConditional::sample(std::span<const double> u, CounterStream& stream,
                                     double* out) const {
  const std::size_t m = exogenous_.size();
  if (finite_) {
    auto r = row(encode(u));
    double target = stream.uniform();
    double acc = 0.0;
    std::size_t pick = r.size() - 1;
    for (std::size_t i = 0; i < r.size(); ++i) {
      acc += r[i];
      if (target < acc) {
        pick = i;
        break;
      }
    }
    while (r[pick] == 0.0 && pick > 0) --pick;
    decode(pick, out);
    return;
  }
  if (!gaussian_) fail(ErrorKind::UnsupportedBackend, "kernel has no direct sampler");
  Eigen::Map<const Eigen::VectorXd> uu(u.data(), m);
  Eigen::VectorXd z(m);
  for (std::size_t j = 0; j < m; ++j) z[j] = stream.normal();
  Eigen::VectorXd x = gaussian_->K * uu + gaussian_->c + sample_factor_ * z;
  for (std::size_t j = 0; j < m; ++j) out[j] = x[j];
}

double kernel_density(const BacktrackingConditional& k, const Assignment& u_star,
                      const Assignment& u) {
  std::vector<double> a, b;
  for (const auto& d : k.exogenous()) {
    auto x = u_star.get(d.name);
    auto y = u.get(d.name);
    if (!x || !y) fail(ErrorKind::IncompleteAssignment, "kernel density needs a value for " + d.name);
    a.push_back(*x);
    b.push_back(*y);
  }
  return k.density(a, b);
}

Distribution joint_world_distribution(const BacktrackingConditional& k, const EngineOptions& options) {
  const std::size_t m = k.exogenous().size();
  std::vector<std::string> vars;
  std::vector<Domain> domains;
  for (const auto& d : k.exogenous()) vars.push_back(d.name);
  for (const auto& d : k.exogenous()) vars.push_back(starred(d.name));
  for (int rep = 0; rep < 2; ++rep)
    for (const auto& d : k.exogenous()) domains.push_back(d.domain);

  if (k.finite()) {
    const auto& prior = k.prior().tabular();
    std::vector<double> values, weights;
    std::vector<double> v(m);
    for (std::size_t r = 0; r < prior.rows(); ++r) {
      auto u = prior.row(r);
      auto kr = k.row(k.encode(u));
      for (std::size_t flat = 0; flat < kr.size(); ++flat) {
        if (kr[flat] == 0.0) continue;
        k.decode(flat, v.data());
        values.insert(values.end(), u.begin(), u.end());
        values.insert(values.end(), v.begin(), v.end());
        weights.push_back(prior.weights[r] * kr[flat]);
      }
    }
    return make_tabular(std::move(vars), std::move(domains), std::move(values), std::move(weights));
  }

  const auto& g = k.prior().gaussian();
  if (auto form = k.gaussian_form()) {
    GaussianDistribution joint;
    joint.variables = vars;
    joint.mean.resize(2 * m);
    joint.mean << g.mean, form->K * g.mean + form->c;
    joint.covariance.resize(2 * m, 2 * m);
    Eigen::MatrixXd cross = form->K * g.covariance;
    joint.covariance.topLeftCorner(m, m) = g.covariance;
    joint.covariance.bottomLeftCorner(m, m) = cross;
    joint.covariance.topRightCorner(m, m) = cross.transpose();
    Eigen::MatrixXd lower = cross * form->K.transpose() + form->S;
    joint.covariance.bottomRightCorner(m, m) = 0.5 * (lower + lower.transpose());
    return joint;
  }

  // Interval kernels: u from the prior, u* uniform on the box, weighted by
  // the kernel density over the box's uniform density.
  ParticleDistribution p;
  p.variables = vars;
  p.seed = options.seed;
  const std::size_t n = options.samples;
  p.values.resize(n * 2 * m);
  p.weights.resize(n);
  detail::RowSampler sampler(k.prior());
  double volume = 1.0;
  for (const auto& d : k.exogenous()) volume *= d.domain.hi() - d.domain.lo();
  for (std::size_t i = 0; i < n; ++i) {
    CounterStream stream(options.seed, i);
    double* u = p.values.data() + i * 2 * m;
    double* us = u + m;
    sampler.draw(stream, u);
    bool inside = true;
    for (std::size_t j = 0; j < m; ++j) {
      const auto& d = k.exogenous()[j].domain;
      us[j] = d.lo() + (d.hi() - d.lo()) * stream.uniform();
      inside = inside && d.contains(u[j]);
    }
    p.weights[i] = inside ? k.density({us, m}, {u, m}) * volume : 0.0;
  }
  double total = 0.0;
  for (double w : p.weights) total += w;
  if (!(total > 0.0)) fail(ErrorKind::ZeroProbabilityEvidence, "no prior particle inside the kernel domain");
  for (double& w : p.weights) w /= total;
  p.ess = effective_sample_size(p.weights);
  return p;
}

namespace {

std::size_t checked_space(const BacktrackingConditional& k) {
  std::size_t n = k.space_size();
  if (n > kMaxCheckedSpace)
    fail(ErrorKind::Undecidable, "exhaustive property check over " + std::to_string(n) +
                                     " worlds exceeds the limit of " + std::to_string(kMaxCheckedSpace));
  return n;
}

void require_closed_form(const BacktrackingConditional& k, std::string_view property) {
  if (!k.gaussian_form())
    fail(ErrorKind::Undecidable, std::string(property) + " of a continuous " +
                                     std::string(to_string(k.spec().kind)) + " kernel without closed form");
}

}  // namespace

bool check_closeness(const BacktrackingConditional& k) {
  if (k.finite()) {
    std::size_t n = checked_space(k);
    for (std::size_t u = 0; u < n; ++u) {
      auto r = k.row(u);
      for (std::size_t v = 0; v < n; ++v)
        if (v != u && !(r[u] - r[v] > kNormalizationTolerance)) return false;
    }
    return true;
  }
  require_closed_form(k, "closeness");
  const auto& f = *k.gaussian_form();
  return near_identity(f.K) && f.c.cwiseAbs().maxCoeff() <= kFormTolerance;
}

bool check_symmetry(const BacktrackingConditional& k) {
  if (k.finite()) {
    std::size_t n = checked_space(k);
    std::vector<std::vector<double>> rows(n);
    for (std::size_t u = 0; u < n; ++u) rows[u] = k.row(u);
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t v = u + 1; v < n; ++v)
        if (std::abs(rows[u][v] - rows[v][u]) > kSymmetryTolerance) return false;
    return true;
  }
  require_closed_form(k, "symmetry");
  const auto& f = *k.gaussian_form();
  return near_identity(f.K) && f.c.cwiseAbs().maxCoeff() <= kFormTolerance;
}

bool check_decomposability(const BacktrackingConditional& k) {
  if (k.finite()) {
    std::size_t n = checked_space(k);
    const std::size_t m = k.exogenous().size();
    std::vector<std::size_t> radix;
    for (const auto& d : k.exogenous()) radix.push_back(d.domain.size());
    // seen[j][a] = marginal of U_j* given any u with u_j = a, once observed.
    std::vector<std::vector<std::vector<double>>> seen(m);
    for (std::size_t j = 0; j < m; ++j) seen[j].resize(radix[j]);
    std::vector<std::size_t> digits(m);
    auto split = [&](std::size_t flat) {
      for (std::size_t j = m; j-- > 0;) {
        digits[j] = flat % radix[j];
        flat /= radix[j];
      }
    };
    for (std::size_t u = 0; u < n; ++u) {
      auto r = k.row(u);
      std::vector<std::vector<double>> marg(m);
      for (std::size_t j = 0; j < m; ++j) marg[j].assign(radix[j], 0.0);
      for (std::size_t v = 0; v < n; ++v) {
        split(v);
        for (std::size_t j = 0; j < m; ++j) marg[j][digits[j]] += r[v];
      }
      for (std::size_t v = 0; v < n; ++v) {
        split(v);
        double p = 1.0;
        for (std::size_t j = 0; j < m; ++j) p *= marg[j][digits[j]];
        if (std::abs(p - r[v]) > kSymmetryTolerance) return false;
      }
      split(u);
      for (std::size_t j = 0; j < m; ++j) {
        auto& slot = seen[j][digits[j]];
        if (slot.empty()) {
          slot = marg[j];
          continue;
        }
        for (std::size_t a = 0; a < radix[j]; ++a)
          if (std::abs(slot[a] - marg[j][a]) > kSymmetryTolerance) return false;
      }
    }
    return true;
  }
  require_closed_form(k, "decomposability");
  const auto& f = *k.gaussian_form();
  return near_diagonal(f.K) && near_diagonal(f.S);
}

double marginal_match_tv(const BacktrackingConditional& k) {
  if (!k.finite()) fail(ErrorKind::Undecidable, "marginal match is only computed for finite kernels");
  const std::size_t n = k.space_size();
  std::vector<double> marginal(n, 0.0);
  for (std::size_t u = 0; u < n; ++u) {
    double pu = k.prior_mass(u);
    if (pu == 0.0) continue;
    auto r = k.row(u);
    for (std::size_t v = 0; v < n; ++v) marginal[v] += pu * r[v];
  }
  double tv = 0.0;
  for (std::size_t v = 0; v < n; ++v) tv += std::abs(marginal[v] - k.prior_mass(v));
  return 0.5 * tv;
}

}  // namespace scmcf
