#include <gtest/gtest.h>

#include <random>

#include "fixtures.hpp"

using namespace scmcf;
using namespace scmcf::testing;

namespace {

ErrorKind validation_kind(const CausalModel& m) {
  try {
    m.validate();
  } catch (const Error& e) {
    return e.kind();
  }
  return ErrorKind::ValidationError;  // sentinel for "no error"; tests compare explicitly
}

}  // namespace

TEST(Model, ValidModels) {
  EXPECT_NO_THROW(firing_squad().validate());
  EXPECT_NO_THROW(linear_chain().validate());
}

TEST(Model, StructuralErrors) {
  auto cyclic = make_model({}, {real("X"), real("Y")}, {{"X", "Y"}, {"Y", "X"}});
  EXPECT_EQ(validation_kind(cyclic), ErrorKind::CyclicModel);

  auto self = make_model({}, {real("X")}, {{"X", "X + 1"}});
  EXPECT_EQ(validation_kind(self), ErrorKind::CyclicModel);

  auto missing = make_model({real("U")}, {real("X"), real("Y")}, {{"X", "U"}});
  EXPECT_EQ(validation_kind(missing), ErrorKind::MissingLaw);

  auto unknown = make_model({real("U")}, {real("X")}, {{"X", "U + W"}});
  EXPECT_EQ(validation_kind(unknown), ErrorKind::UnknownVariable);

  auto dup = make_model({real("X")}, {real("X")}, {{"X", "1"}});
  EXPECT_EQ(validation_kind(dup), ErrorKind::DuplicateVariable);

  // X + U reaches 2, which is not boolean.
  auto closure = make_model({boolean("U")}, {boolean("V"), boolean("X")},
                            {{"V", "U"}, {"X", "V + U"}});
  EXPECT_EQ(validation_kind(closure), ErrorKind::DomainMismatch);

  EXPECT_THROW(cyclic.topological_order(), Error);
}

TEST(Model, TopologicalOrder) {
  EXPECT_EQ(linear_chain().topological_order(), (std::vector<std::string>{"X", "Y", "Z"}));
  EXPECT_EQ(firing_squad().topological_order(),
            (std::vector<std::string>{"C", "A", "B", "P"}));
  auto single = make_model({boolean("U")}, {boolean("X")}, {{"X", "U"}});
  EXPECT_EQ(single.topological_order(), (std::vector<std::string>{"X"}));

  // Declared out of causal order: still parents first, ties by declaration.
  auto rev = make_model({real("U")}, {real("Z"), real("Y"), real("X")},
                        {{"Z", "X + Y"}, {"Y", "X"}, {"X", "U"}});
  EXPECT_EQ(rev.topological_order(), (std::vector<std::string>{"X", "Y", "Z"}));
}

TEST(Model, Solve) {
  auto m = linear_chain();
  auto v = m.solve({{"U_X", 1}, {"U_Y", 1}, {"U_Z", -1}});
  EXPECT_EQ(v, (Assignment{{"X", 1}, {"Y", 2}, {"Z", 2}}));

  auto fs = firing_squad();
  EXPECT_EQ(fs.solve({{"U", 1}}), (Assignment{{"C", 1}, {"A", 1}, {"B", 1}, {"P", 1}}));
  EXPECT_EQ(fs.solve({{"U", 0}}), (Assignment{{"C", 0}, {"A", 0}, {"B", 0}, {"P", 0}}));

  try {
    m.solve({{"U_X", 1}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::IncompleteAssignment);
  }
  EXPECT_THROW(fs.solve({{"U", 3}}), Error);
}

TEST(Model, Submodel) {
  auto m = linear_chain();
  auto sub = m.submodel({{"Y", 3}});
  EXPECT_EQ(to_string(sub.law_for("Y").function), "3");
  EXPECT_TRUE(sub.law_for("X").function == m.law_for("X").function);
  EXPECT_TRUE(sub.law_for("Z").function == m.law_for("Z").function);
  EXPECT_EQ(sub.solve({{"U_X", 1}, {"U_Y", 1}, {"U_Z", -1}}),
            (Assignment{{"X", 1}, {"Y", 3}, {"Z", 3}}));

  EXPECT_TRUE(m.submodel({}) == m);

  auto fs = firing_squad().submodel({{"A", 0}});
  EXPECT_EQ(to_string(fs.law_for("A").function), "0");
  EXPECT_EQ(to_string(fs.law_for("B").function), "C");
  EXPECT_EQ(fs.solve({{"U", 1}}), (Assignment{{"C", 1}, {"A", 0}, {"B", 1}, {"P", 1}}));

  try {
    m.submodel({{"W", 1}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::UnknownVariable);
  }
}

TEST(Model, Ancestors) {
  auto m = linear_chain();
  EXPECT_EQ(m.ancestors({"Y"}), (std::set<std::string>{"Y", "X", "U_X", "U_Y"}));
  EXPECT_EQ(m.ancestors({"X"}), (std::set<std::string>{"X", "U_X"}));
  EXPECT_EQ(firing_squad().ancestors({"P"}), (std::set<std::string>{"U", "C", "A", "B", "P"}));
  EXPECT_THROW(m.ancestors({"Q"}), Error);
}

TEST(Model, LinearGaussianCompatibility) {
  auto chk = is_linear_additive_gaussian_compatible(linear_chain());
  ASSERT_TRUE(chk.compatible) << chk.reason;
  Eigen::MatrixXd expected(3, 3);
  expected << 1, 0, 0, 1, 1, 0, 2, 1, 1;
  EXPECT_EQ(chk.form.A, expected);
  EXPECT_EQ(chk.form.b, Eigen::VectorXd::Zero(3));

  auto mult = make_model({real("U_X"), real("U_Y")}, {real("X"), real("Y")},
                         {{"X", "U_X"}, {"Y", "X * U_Y"}});
  EXPECT_FALSE(is_linear_additive_gaussian_compatible(mult).compatible);

  auto xy = make_model({real("U")}, {real("X"), real("Y")}, {{"X", "U"}, {"Y", "X"}});
  auto xy_chk = is_linear_additive_gaussian_compatible(xy);
  ASSERT_TRUE(xy_chk.compatible) << xy_chk.reason;
  EXPECT_EQ(xy_chk.form.A, Eigen::MatrixXd::Ones(2, 1));

  auto shared = make_model({real("U")}, {real("X"), real("Y")}, {{"X", "U"}, {"Y", "X + U"}});
  EXPECT_FALSE(is_linear_additive_gaussian_compatible(shared).compatible);
  EXPECT_TRUE(affine_reduced_form(shared).has_value());

  EXPECT_FALSE(is_linear_additive_gaussian_compatible(firing_squad()).compatible);
}

namespace {

// Random boolean/ternary acyclic models for the solve invariants.
CausalModel random_finite_model(std::mt19937& rng) {
  std::vector<VariableDecl> exo{ternary("U0"), boolean("U1")};
  std::vector<VariableDecl> endo;
  std::vector<LawText> laws;
  const int n = 2 + static_cast<int>(rng() % 4);
  for (int i = 0; i < n; ++i) {
    std::string name = "V" + std::to_string(i);
    endo.push_back(ternary(name));
    std::vector<std::string> pool{"U0", "U1"};
    for (int j = 0; j < i; ++j) pool.push_back("V" + std::to_string(j));
    auto pick = [&] { return pool[rng() % pool.size()]; };
    switch (rng() % 4) {
      case 0: laws.push_back({name, "max(" + pick() + ", " + pick() + ")"}); break;
      case 1: laws.push_back({name, "min(" + pick() + ", " + pick() + ")"}); break;
      case 2: laws.push_back({name, "ite(" + pick() + " >= 1, " + pick() + ", 2 - " + pick() + ")"}); break;
      default: laws.push_back({name, pick()}); break;
    }
  }
  return make_model(exo, endo, laws);
}

}  // namespace

TEST(ModelProperties, SurgeryOnlyAffectsDescendants) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 40; ++trial) {
    auto m = random_finite_model(rng);
    ASSERT_NO_THROW(m.validate());
    const auto& endo = m.endogenous();
    std::string x = endo[rng() % endo.size()].name;
    for (double xv : {0.0, 1.0, 2.0}) {
      auto sub = m.submodel({{x, xv}});
      auto desc = m.descendants({x});
      for (double u0 : {0.0, 1.0, 2.0}) {
        for (double u1 : {0.0, 1.0}) {
          Assignment u{{"U0", u0}, {"U1", u1}};
          auto base = m.solve(u);
          auto cf = sub.solve(u);
          EXPECT_EQ(cf.at(x), xv);
          for (const auto& [name, value] : base) {
            if (!desc.count(name)) EXPECT_EQ(cf.at(name), value) << name;
          }
          // Manual substitution: evaluate laws in topological order with X fixed.
          Assignment manual = u;
          for (const auto& v : m.topological_order()) {
            double val = v == x ? xv
                                : m.law_for(v).function.evaluate(
                                      [&](const std::string& r) { return manual.at(r); });
            manual.set(v, val);
          }
          for (const auto& [name, value] : cf) EXPECT_EQ(manual.at(name), value);
        }
      }
    }
  }
}

TEST(ModelProperties, SolveIndependentOfDeclarationOrder) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    auto m = random_finite_model(rng);
    auto endo = m.endogenous();
    auto laws = m.laws();
    std::reverse(endo.begin(), endo.end());
    std::reverse(laws.begin(), laws.end());
    CausalModel shuffled(m.exogenous(), endo, laws);
    ASSERT_NO_THROW(shuffled.validate());
    for (double u0 : {0.0, 1.0, 2.0}) {
      for (double u1 : {0.0, 1.0}) {
        Assignment u{{"U0", u0}, {"U1", u1}};
        EXPECT_EQ(m.solve(u), shuffled.solve(u));
      }
    }
  }
}

TEST(ModelProperties, AncestorsMonotone) {
  std::mt19937 rng(9);
  for (int trial = 0; trial < 30; ++trial) {
    auto m = random_finite_model(rng);
    std::vector<std::string> small, large;
    for (const auto& d : m.endogenous()) {
      bool in_small = rng() % 3 == 0;
      if (in_small) small.push_back(d.name);
      if (in_small || rng() % 2) large.push_back(d.name);
    }
    auto a = m.ancestors(small);
    auto b = m.ancestors(large);
    EXPECT_TRUE(std::includes(b.begin(), b.end(), a.begin(), a.end()));
    for (const auto& t : small) EXPECT_TRUE(a.count(t));
  }
}
