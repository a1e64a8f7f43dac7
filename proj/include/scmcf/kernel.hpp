#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scmcf/model.hpp"
#include "scmcf/probability.hpp"
#include "scmcf/rng.hpp"

namespace scmcf {

/// Counterfactual copy of a variable name: "U_X" -> "U_X*".
std::string starred(const std::string& name);

struct DistanceTerm {
  enum class Kind {
    Squared,   // (u* - u)^2 / (2 scale^2)
    Absolute,  // scale * |u* - u|
    Mismatch,  // scale * [u* != u]
  };
  std::string variable;
  Kind kind = Kind::Squared;
  double scale = 1.0;

  bool operator==(const DistanceTerm&) const = default;
};

/// Sum of per-variable terms plus an optional Mahalanobis part
/// 0.5 (u* - u)^T covariance^-1 (u* - u) over all exogenous variables in
/// declaration order.
struct DistanceSpec {
  std::vector<DistanceTerm> terms;
  std::optional<Eigen::MatrixXd> covariance;

  bool operator==(const DistanceSpec& other) const;
};

enum class KernelKind {
  SharedWorlds,
  PriorIndependent,
  DistanceBased,
  GaussianKernel,
  GeneralizedPriorDistance,
  StabilityMixture,
};

enum class KernelProperty { Closeness, Symmetry, Decomposability };

std::string_view to_string(KernelKind k);
std::string_view to_string(KernelProperty p);

struct KernelSpec {
  KernelKind kind = KernelKind::SharedWorlds;
  DistanceSpec distance;          // DistanceBased, GeneralizedPriorDistance
  Eigen::MatrixXd sigma;          // GaussianKernel covariance
  double alpha = 0.0;             // GeneralizedPriorDistance prior exponent
  double beta = 1.0;              // GeneralizedPriorDistance distance weight
  std::vector<double> stability;  // StabilityMixture; one value applies to every variable
  std::vector<KernelProperty> declared;

  bool operator==(const KernelSpec& other) const;
};

/// U* = K U + c + eps, eps ~ N(0, S).
struct GaussianKernelForm {
  Eigen::MatrixXd K;
  Eigen::VectorXd c;
  Eigen::MatrixXd S;
};

/// A kernel P_B(U* | U) bound to a model's exogenous variables and prior.
/// Finite kernels enumerate the full product space of exogenous domains in
/// declaration-lexicographic order (first variable most significant).
class BacktrackingConditional {
 public:
  /// Validates parameters and verifies declared properties.
  /// Errors: InvalidKernel, PropertyMismatch, Undecidable, UnboundedNormalizer.
  static BacktrackingConditional bind(const KernelSpec& spec,
                                      const std::vector<VariableDecl>& exogenous,
                                      const Distribution& prior);

  const KernelSpec& spec() const noexcept { return spec_; }
  const std::vector<VariableDecl>& exogenous() const noexcept { return exogenous_; }
  /// The prior with variables in exogenous declaration order.
  const Distribution& prior() const noexcept { return prior_; }
  bool finite() const noexcept { return finite_; }

  std::size_t space_size() const;
  void decode(std::size_t flat, double* out) const;
  std::size_t encode(std::span<const double> u) const;
  double prior_mass(std::size_t flat) const { return prior_dense_[flat]; }
  /// P_B(. | u) over the whole finite space.
  std::vector<double> row(std::size_t u_flat) const;

  /// Normalized density (or mass) of u* given u. Both in declaration order.
  double density(std::span<const double> u_star, std::span<const double> u) const;

  const std::optional<GaussianKernelForm>& gaussian_form() const noexcept { return gaussian_; }

  /// Draws u* ~ P_B(. | u) when a direct sampler exists (finite, Gaussian form).
  bool can_sample() const;
  void sample(std::span<const double> u, CounterStream& stream, double* out) const;

 private:
  BacktrackingConditional() = default;
  double distance(std::span<const double> a, std::span<const double> b) const;
  double continuous_normalizer(std::span<const double> u) const;

  KernelSpec spec_;
  std::vector<VariableDecl> exogenous_;
  Distribution prior_ = TabularDistribution{};
  bool finite_ = false;

  // finite
  std::vector<std::size_t> radix_;
  std::vector<double> prior_dense_;
  std::vector<std::vector<double>> prior_marginals_;  // per variable, over domain index
  std::vector<double> stability_;

  // continuous
  std::optional<GaussianKernelForm> gaussian_;
  Eigen::MatrixXd sample_factor_;
  std::vector<std::pair<std::size_t, DistanceTerm>> terms_;  // (variable index, term)
  Eigen::MatrixXd distance_precision_;
  bool has_distance_precision_ = false;
};

double kernel_density(const BacktrackingConditional& k, const Assignment& u_star,
                      const Assignment& u);

/// P(U) P_B(U* | U) over (U..., U*...).
Distribution joint_world_distribution(const BacktrackingConditional& k,
                                      const EngineOptions& options = {});

/// Throw Undecidable for continuous kernels without a closed form.
bool check_closeness(const BacktrackingConditional& k);
bool check_symmetry(const BacktrackingConditional& k);
bool check_decomposability(const BacktrackingConditional& k);

/// Total variation between P_B(U*) and P(U) (finite kernels).
double marginal_match_tv(const BacktrackingConditional& k);

}  // namespace scmcf
