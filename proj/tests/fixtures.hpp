#pragma once

#include <string>
#include <utility>
#include <vector>

#include "scmcf/model.hpp"
#include "scmcf/probability.hpp"

namespace scmcf::testing {

struct LawText {
  std::string target;
  std::string expr;
};

inline CausalModel make_model(std::vector<VariableDecl> exo, std::vector<VariableDecl> endo,
                              const std::vector<LawText>& laws) {
  std::vector<StructuralLaw> parsed;
  for (const auto& l : laws) parsed.push_back({l.target, parse_expression(l.expr)});
  return CausalModel(std::move(exo), std::move(endo), std::move(parsed));
}

inline VariableDecl real(const std::string& name) { return {name, Domain::real()}; }
inline VariableDecl boolean(const std::string& name) { return {name, Domain::boolean()}; }
inline VariableDecl ternary(const std::string& name) { return {name, Domain::finite({0, 1, 2})}; }

// X := U_X, Y := X + U_Y, Z := X + Y + U_Z
inline CausalModel linear_chain() {
  return make_model({real("U_X"), real("U_Y"), real("U_Z")}, {real("X"), real("Y"), real("Z")},
                    {{"X", "U_X"}, {"Y", "X + U_Y"}, {"Z", "X + Y + U_Z"}});
}

inline CausalModel firing_squad() {
  return make_model({boolean("U")}, {boolean("C"), boolean("A"), boolean("B"), boolean("P")},
                    {{"C", "U"}, {"A", "C"}, {"B", "C"}, {"P", "A | B"}});
}

inline Distribution bernoulli(const std::string& name, double theta) {
  return make_tabular({name}, {Domain::boolean()}, {0, 1}, {1 - theta, theta});
}

inline Distribution categorical(const std::string& name, const Domain& d, std::vector<double> p) {
  std::vector<double> vals(d.values().begin(), d.values().end());
  return make_tabular({name}, {d}, vals, std::move(p));
}

inline Distribution standard_normal(const std::vector<std::string>& names) {
  const auto n = static_cast<Eigen::Index>(names.size());
  return GaussianDistribution{names, Eigen::VectorXd::Zero(n), Eigen::MatrixXd::Identity(n, n)};
}

inline Distribution independent(const std::vector<Distribution>& factors) {
  Distribution out = factors.front();
  for (std::size_t i = 1; i < factors.size(); ++i) out = product(out, factors[i]);
  return out;
}

}  // namespace scmcf::testing
