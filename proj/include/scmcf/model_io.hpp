#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "scmcf/kernel.hpp"
#include "scmcf/model.hpp"
#include "scmcf/probability.hpp"
#include "scmcf/unified.hpp"

namespace scmcf {

/// One statement of a `prior` section.
struct PriorFactor {
  enum class Kind { Bernoulli, Categorical, Normal, Gaussian, Table };
  Kind kind = Kind::Categorical;
  std::vector<std::string> variables;
  std::vector<double> weights;  // Bernoulli {p}; Categorical per domain value; Table per row
  std::vector<double> rows;     // Table only, row-major
  Eigen::VectorXd mean;         // Normal, Gaussian
  Eigen::MatrixXd covariance;   // Normal (1x1 variance), Gaussian

  bool operator==(const PriorFactor& other) const;
};

/// Optional per-variable regime settings of a model file.
struct RegimeConfig {
  std::map<std::string, std::vector<double>> levels;
  /// Weights over regime values; nullopt is obs.
  std::map<std::string, std::vector<std::pair<std::optional<double>, double>>> prior;
  std::map<std::string, double> flip;

  bool empty() const { return levels.empty() && prior.empty() && flip.empty(); }
  bool operator==(const RegimeConfig&) const = default;
};

struct ModelDocument {
  CausalModel model;
  std::vector<PriorFactor> prior;  // empty when the file has no prior section
  std::optional<KernelSpec> kernel;
  RegimeConfig regimes;

  bool operator==(const ModelDocument& other) const;
};

/// Errors: ParseError (with line:column) for syntax and unknown symbols;
/// structural errors keep their kind (CyclicModel, MissingLaw, ...);
/// ValidationError for inconsistent sections; UnsupportedBackend for priors
/// mixing finite and real-valued factors.
ModelDocument parse_model(std::string_view text);
std::string serialize_model(const ModelDocument& doc);

/// Joint prior over the exogenous variables in declaration order.
/// Throws ValidationError if the document has no prior.
Distribution prior_distribution(const ModelDocument& doc);

/// Augmentation using the document's levels plus `extra` ones.
AugmentedModel augment_document(const ModelDocument& doc,
                                 const std::map<std::string, std::vector<double>>& extra = {});
/// Independent regime prior from the document (all-obs where unspecified).
Distribution regime_prior_distribution(const ModelDocument& doc, const AugmentedModel& aug);

enum class Semantics { Observe, Intervene, Backtrack, Unified };
std::string_view to_string(Semantics s);

struct QueryDocument {
  Semantics semantics = Semantics::Observe;
  Assignment given;         // factual evidence
  Assignment intervention;  // `do`
  Assignment had;           // counterfactual evidence, unstarred names
  RegimeClauses factual_regimes;
  RegimeClauses counterfactual_regimes;
  std::vector<std::string> targets;  // unstarred names
  std::optional<Backend> backend;
  std::optional<std::size_t> samples;
  std::optional<std::uint64_t> seed;

  bool operator==(const QueryDocument&) const = default;
};

/// Errors: ParseError; TypeMismatch for values outside a domain or clauses
/// that do not fit the selector.
QueryDocument parse_query(std::string_view text, const CausalModel& model);
/// "A=1, B=low" over declared variables of either kind; empty text gives {}.
Assignment parse_assignment(std::string_view text, const CausalModel& model);
std::string serialize_query(const QueryDocument& query, const CausalModel& model);

enum class OutputFormat { Table, Moments, Machine };

struct RenderContext {
  std::string provenance;
  std::vector<std::string> notes;  // extra "key: value" lines
  std::vector<std::string> diagnostics;
};

std::string render_result(const Distribution& dist, OutputFormat format, const RenderContext& context = {});

/// Relations x_i = c + sum a_j x_j that hold surely under a singular
/// Gaussian, one per null direction, solved for the last free variable.
std::vector<std::string> deterministic_relations(const GaussianDistribution& g);

}  // namespace scmcf
