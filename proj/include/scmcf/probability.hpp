#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "scmcf/domain.hpp"
#include "scmcf/model.hpp"

namespace scmcf {

inline constexpr double kNormalizationTolerance = 1e-12;
inline constexpr double kSymmetryTolerance = 1e-10;
inline constexpr double kPsdSlack = 1e-10;

/// Weighted list of distinct rows over a fixed variable list. Rows are kept
/// in canonical order: lexicographic by position in each variable's finite
/// domain (numeric value for non-finite domains).
struct TabularDistribution {
  std::vector<std::string> variables;
  std::vector<Domain> domains;
  std::vector<double> values;  // row-major, rows() x variables.size()
  std::vector<double> weights;

  std::size_t rows() const { return weights.size(); }
  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * variables.size(), variables.size()};
  }
};

struct GaussianDistribution {
  std::vector<std::string> variables;
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;  // positive semidefinite; may be singular
};

struct ParticleDistribution {
  std::vector<std::string> variables;
  std::vector<double> values;  // row-major
  std::vector<double> weights;  // normalized
  std::uint64_t seed = 0;
  double ess = 0.0;
  std::vector<std::string> diagnostics;

  std::size_t rows() const { return weights.size(); }
  std::span<const double> row(std::size_t r) const {
    return {values.data() + r * variables.size(), variables.size()};
  }
};

class Distribution {
 public:
  enum class Kind { Tabular, Gaussian, Particle };

  Distribution(TabularDistribution t) : v_(std::move(t)) {}
  Distribution(GaussianDistribution g) : v_(std::move(g)) {}
  Distribution(ParticleDistribution p) : v_(std::move(p)) {}

  Kind kind() const noexcept { return static_cast<Kind>(v_.index()); }
  const std::vector<std::string>& variables() const;
  std::optional<std::size_t> index_of(const std::string& name) const;

  const TabularDistribution& tabular() const;
  const GaussianDistribution& gaussian() const;
  const ParticleDistribution& particles() const;

 private:
  std::variant<TabularDistribution, GaussianDistribution, ParticleDistribution> v_;
};

std::string_view to_string(Distribution::Kind kind);

/// Canonicalizes: merges duplicate rows, drops zero-weight rows, sorts, and
/// normalizes. Throws ZeroProbabilityEvidence if the total mass is zero.
TabularDistribution make_tabular(std::vector<std::string> variables, std::vector<Domain> domains,
                                 std::vector<double> values, std::vector<double> weights);

/// Point mass; finite domains give a one-row table, real ones a zero-covariance Gaussian.
Distribution point_mass(const Assignment& a, const std::vector<Domain>& domains);

/// C x = d over the distribution's variables in their stored order.
struct LinearConstraint {
  Eigen::MatrixXd C;
  Eigen::VectorXd d;
};

enum class Backend { Auto, Exact, Gaussian, MonteCarlo };

std::string_view to_string(Backend b);

struct EngineOptions {
  Backend backend = Backend::Auto;
  std::size_t samples = 100000;
  std::uint64_t seed = 0;
  unsigned workers = 1;
};

/// Pushforward of `prior` through the model's laws, restricted to `targets`.
Distribution endogenous_distribution(const CausalModel& model, const Distribution& prior,
                                     const std::vector<std::string>& targets,
                                     const EngineOptions& options = {});

Distribution condition_on(const Distribution& dist, const Assignment& evidence);
Distribution condition_on(const Distribution& dist, const LinearConstraint& constraint);

Distribution marginalise(const Distribution& dist, const std::vector<std::string>& keep);

std::vector<Assignment> sample(const Distribution& dist, std::size_t n, std::uint64_t seed);

Distribution product(const Distribution& a, const Distribution& b);

/// P(Y | evidence) under the model, evidence on endogenous variables.
Distribution observational_query(const CausalModel& model, const Distribution& prior,
                                 const Assignment& evidence,
                                 const std::vector<std::string>& targets,
                                 const EngineOptions& options = {});

/// Variables permuted to `order` (a permutation of the current list).
Distribution reorder(const Distribution& dist, const std::vector<std::string>& order);

/// Same distribution with its variables renamed positionally.
Distribution rename(const Distribution& dist, std::vector<std::string> names);

/// Half the L1 distance between two tables over the same variables.
double total_variation(const TabularDistribution& a, const TabularDistribution& b);

/// Mass of the rows matching `event` (a partial assignment).
double probability(const TabularDistribution& t, const Assignment& event);

struct Moments {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

Moments moments(const Distribution& dist);

/// Effective sample size (sum w)^2 / sum w^2.
double effective_sample_size(std::span<const double> weights);

// ---------------------------------------------------------------------------
// Gaussian algebra shared by the engines.

/// Conditions x ~ N(mean, cov) on C x = d with the pseudoinverse of C cov C^T.
/// Throws `on_inconsistent` if d is outside the support of C x.
GaussianDistribution condition_gaussian(const GaussianDistribution& g, const Eigen::MatrixXd& C,
                                        const Eigen::VectorXd& d, ErrorKind on_inconsistent);

/// P(C x = d) for x ~ g: 1 when the event holds almost surely, else 0.
double gaussian_event_probability(const GaussianDistribution& g, const Eigen::MatrixXd& C,
                                  const Eigen::VectorXd& d);

/// Symmetric pseudoinverse with eigenvalues below a relative threshold dropped.
Eigen::MatrixXd pseudo_inverse(const Eigen::MatrixXd& sym);

/// L with L L^T = cov for a PSD matrix (eigen factorization, so singular
/// covariances are fine).
Eigen::MatrixXd psd_factor(const Eigen::MatrixXd& cov);

/// Log density of a nonsingular Gaussian. Throws ValidationError if singular.
double gaussian_log_density(const GaussianDistribution& g, const Eigen::VectorXd& x);

}  // namespace scmcf
