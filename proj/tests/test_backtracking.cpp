#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "random_models.hpp"
#include "scmcf/backtracking.hpp"
#include "scmcf/error.hpp"
#include "scmcf/interventional.hpp"

using namespace scmcf;
using namespace scmcf::testing;

namespace {

KernelSpec stability(double s) {
  KernelSpec k;
  k.kind = KernelKind::StabilityMixture;
  k.stability = {s};
  return k;
}

KernelSpec of_kind(KernelKind kind) {
  KernelSpec k;
  k.kind = kind;
  return k;
}

KernelSpec mismatch_distance(const std::vector<VariableDecl>& exo) {
  KernelSpec k = of_kind(KernelKind::DistanceBased);
  for (const auto& d : exo) k.distance.terms.push_back({d.name, DistanceTerm::Kind::Mismatch, 1.0});
  return k;
}

// Backtracking kernel of the worked linear example: N(u, diag(r, 1, sz)).
BacktrackingConditional chain_kernel(double r, double sz) {
  auto m = linear_chain();
  KernelSpec spec = of_kind(KernelKind::GaussianKernel);
  spec.sigma = Eigen::Vector3d(r, 1.0, sz).asDiagonal();
  return BacktrackingConditional::bind(spec, m.exogenous(), standard_normal({"U_X", "U_Y", "U_Z"}));
}

const Assignment kChainFacts{{"X", 1}, {"Y", 2}, {"Z", 2}};

ErrorKind error_kind(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an error";
  return ErrorKind::ValidationError;
}

}  // namespace

TEST(Backtracking, FiringSquadJointProbability) {
  auto m = firing_squad();
  auto k = BacktrackingConditional::bind(stability(0.9), m.exogenous(), bernoulli("U", 0.5));
  EXPECT_NEAR(backtracking_joint_probability(m, k, Assignment{{"A", 0}}, Assignment{{"A", 1}}), 0.025, 1e-15);
  EXPECT_NEAR(backtracking_joint_probability(m, k, {}, {}), 1.0, 1e-15);
  auto shared = BacktrackingConditional::bind(of_kind(KernelKind::SharedWorlds), m.exogenous(),
                                              bernoulli("U", 0.5));
  EXPECT_EQ(backtracking_joint_probability(m, shared, Assignment{{"A", 0}}, Assignment{{"A", 1}}), 0.0);
}

TEST(Backtracking, GaussianJointProbabilityIsEventMeasure) {
  auto m = linear_chain();
  auto k = chain_kernel(1.0, 1.0);
  EXPECT_EQ(backtracking_joint_probability(m, k, {}, {}), 1.0);
  EXPECT_EQ(backtracking_joint_probability(m, k, Assignment{{"Y", 3}}, kChainFacts), 0.0);
}

TEST(Backtracking, LinearChainAnalyticPosterior) {
  auto m = linear_chain();
  for (double r : {0.01, 1.0, 100.0}) {
    const double sz = 0.8;
    auto k = chain_kernel(r, sz);
    auto post = cross_world_abduction(m, k, Assignment{{"Y", 3}}, kChainFacts);
    EXPECT_EQ(post.provenance, "gaussian");
    const auto& star = post.marginal_star.gaussian();
    EXPECT_EQ(star.variables, (std::vector<std::string>{"U_X*", "U_Y*", "U_Z*"}));
    const double shift = r / (1 + r), vx = r / (1 + r);
    EXPECT_NEAR(star.mean[0], 1 + shift, 1e-9);
    EXPECT_NEAR(star.mean[1], 3 - (1 + shift), 1e-9);
    EXPECT_NEAR(star.mean[2], -1, 1e-9);
    EXPECT_NEAR(star.covariance(0, 0), vx, 1e-9);
    EXPECT_NEAR(star.covariance(2, 2), sz, 1e-9);
    EXPECT_NEAR(star.covariance(0, 2), 0.0, 1e-9);
    // U_Y* = 3 - U_X*
    EXPECT_NEAR(star.covariance(1, 1), vx, 1e-9);
    EXPECT_NEAR(star.covariance(0, 1), -vx, 1e-9);

    auto out = backtracking_counterfactual(m, k, {kChainFacts, Assignment{{"Y", 3}}, {"X", "Z"}}).gaussian();
    EXPECT_EQ(out.variables, (std::vector<std::string>{"X*", "Z*"}));
    EXPECT_NEAR(out.mean[0], 1 + shift, 1e-9);
    EXPECT_NEAR(out.mean[1], 3 + shift, 1e-9);
    EXPECT_NEAR(out.covariance(0, 0), vx, 1e-9);
    EXPECT_NEAR(out.covariance(0, 1), vx, 1e-9);
    EXPECT_NEAR(out.covariance(1, 0), vx, 1e-9);
    EXPECT_NEAR(out.covariance(1, 1), sz + vx, 1e-9);
  }
}

TEST(Backtracking, LinearChainImportanceSamplerAgrees) {
  auto m = linear_chain();
  auto k = chain_kernel(1.0, 0.8);
  EngineOptions is;
  is.backend = Backend::MonteCarlo;
  is.samples = 100000;
  is.seed = 17;
  auto analytic = backtracking_counterfactual(m, k, {kChainFacts, Assignment{{"Y", 3}}, {"X", "Z"}});
  auto sampled = backtracking_counterfactual(m, k, {kChainFacts, Assignment{{"Y", 3}}, {"X", "Z"}}, is);
  ASSERT_EQ(sampled.kind(), Distribution::Kind::Particle);
  double ess = sampled.particles().ess;
  auto a = moments(analytic), s = moments(sampled);
  for (int i = 0; i < 2; ++i) {
    double se = std::sqrt(a.covariance(i, i) / ess);
    EXPECT_NEAR(s.mean[i], a.mean[i], 3 * se) << i;
    for (int j = 0; j < 2; ++j) {
      double se2 = std::sqrt((a.covariance(i, i) * a.covariance(j, j) + a.covariance(i, j) * a.covariance(i, j)) / ess);
      EXPECT_NEAR(s.covariance(i, j), a.covariance(i, j), 3 * se2) << i << j;
    }
  }
}

TEST(Backtracking, MapWorldCases) {
  auto m = linear_chain();
  auto world = [&](double r) {
    return map_world(cross_world_abduction(m, chain_kernel(r, 1.0), Assignment{{"Y", 3}}, kChainFacts));
  };
  auto mid = world(1.0);
  EXPECT_NEAR(*mid.get("U_X*"), 1.5, 1e-9);
  EXPECT_NEAR(*mid.get("U_Y*"), 1.5, 1e-9);
  EXPECT_NEAR(*mid.get("U_Z*"), -1, 1e-9);
  auto small = world(1e-8);
  EXPECT_NEAR(*small.get("U_X*"), 1, 1e-6);
  EXPECT_NEAR(*small.get("U_Y*"), 2, 1e-6);
  auto large = world(1e8);
  EXPECT_NEAR(*large.get("U_X*"), 2, 1e-6);
  EXPECT_NEAR(*large.get("U_Y*"), 1, 1e-6);
}

TEST(Backtracking, FiringSquadPrisonerLives) {
  auto m = firing_squad();
  Assignment facts{{"C", 1}, {"A", 1}, {"B", 1}, {"P", 1}};
  for (const auto& spec : {stability(0.9), mismatch_distance(m.exogenous())}) {
    auto k = BacktrackingConditional::bind(spec, m.exogenous(), bernoulli("U", 0.5));
    ASSERT_TRUE(check_symmetry(k));
    auto post = cross_world_abduction(m, k, Assignment{{"A", 0}}, facts);
    const auto& star = post.marginal_star.tabular();
    ASSERT_EQ(star.rows(), 1u);
    EXPECT_EQ(star.row(0)[0], 0.0);
    auto out = backtracking_counterfactual(m, k, {facts, Assignment{{"A", 0}}, {"P"}}).tabular();
    ASSERT_EQ(out.rows(), 1u);
    EXPECT_EQ(out.row(0)[0], 0.0);
    EXPECT_EQ(out.weights[0], 1.0);
  }
}

TEST(Backtracking, CounterlegalAntecedent) {
  auto m = make_model({boolean("U")}, {boolean("X"), boolean("Y")}, {{"X", "U"}, {"Y", "X"}});
  auto k = BacktrackingConditional::bind(stability(0.5), m.exogenous(), bernoulli("U", 0.5));
  EXPECT_EQ(error_kind([&] { cross_world_abduction(m, k, Assignment{{"Y", 1}, {"X", 0}}, {}); }),
            ErrorKind::CounterlegalAntecedent);
  EXPECT_EQ(error_kind([&] { cross_world_abduction(m, k, Assignment{{"Y", 1}}, Assignment{{"Y", 1}, {"X", 0}}); }),
            ErrorKind::ZeroProbabilityEvidence);
  // reachable under the laws but not under the shared-worlds kernel
  auto shared = BacktrackingConditional::bind(of_kind(KernelKind::SharedWorlds), m.exogenous(), bernoulli("U", 0.5));
  try {
    cross_world_abduction(m, shared, Assignment{{"Y", 0}}, Assignment{{"Y", 1}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::CounterlegalAntecedent);
    EXPECT_NE(std::string(e.what()).find("kernel"), std::string::npos);
  }
}

TEST(Backtracking, GaussianCounterlegal) {
  auto m = make_model({real("U")}, {real("X"), real("Y")}, {{"X", "U"}, {"Y", "X"}});
  KernelSpec spec = of_kind(KernelKind::GaussianKernel);
  spec.sigma = Eigen::MatrixXd::Identity(1, 1);
  auto k = BacktrackingConditional::bind(spec, m.exogenous(), standard_normal({"U"}));
  EXPECT_EQ(error_kind([&] { cross_world_abduction(m, k, Assignment{{"Y", 1}, {"X", 0}}, {}); }),
            ErrorKind::CounterlegalAntecedent);
  EngineOptions is;
  is.backend = Backend::MonteCarlo;
  is.samples = 1000;
  EXPECT_EQ(error_kind([&] { cross_world_abduction(m, k, Assignment{{"Y", 1}, {"X", 0}}, {}, is); }),
            ErrorKind::CounterlegalAntecedent);
}

TEST(Backtracking, NothingToExplainAway) {
  auto m = firing_squad();
  auto k = BacktrackingConditional::bind(of_kind(KernelKind::SharedWorlds), m.exogenous(), bernoulli("U", 0.4));
  Assignment facts{{"C", 1}, {"A", 1}, {"B", 1}, {"P", 1}};
  auto out = backtracking_counterfactual(m, k, {facts, Assignment{{"A", 1}}, {"C", "A", "B", "P"}}).tabular();
  ASSERT_EQ(out.rows(), 1u);
  for (int j = 0; j < 4; ++j) EXPECT_EQ(out.row(0)[j], 1.0);
}

// Exogenous variables outside the ancestors of the evidence keep their prior
// pair distribution under factorizing priors and decomposable kernels.
TEST(Backtracking, NonAncestorPairsKeepPrior) {
  std::mt19937 rng(31);
  int checked = 0;
  for (int trial = 0; trial < 40; ++trial) {
    auto r = random_finite_model(rng, 5, 5);
    const auto& m = r.model;
    KernelSpec spec = rng() % 2 ? stability(0.2 + 0.6 * (rng() % 100) / 100.0) : mismatch_distance(m.exogenous());
    auto k = BacktrackingConditional::bind(spec, m.exogenous(), r.prior);
    const auto& endo = m.endogenous();
    const auto& xv = endo[rng() % endo.size()];
    const auto& zv = endo[rng() % endo.size()];
    Assignment x_star{{xv.name, xv.domain.values()[rng() % xv.domain.size()]}};
    Assignment z{{zv.name, zv.domain.values()[rng() % zv.domain.size()]}};
    CrossWorldPosterior post = [&] {
      try {
        return cross_world_abduction(m, k, x_star, z);
      } catch (const Error&) {
        return CrossWorldPosterior{TabularDistribution{}, TabularDistribution{}, "", {}};
      }
    }();
    if (post.provenance.empty()) continue;
    auto anc = m.ancestors({xv.name, zv.name});
    auto prior_pairs = joint_world_distribution(k);
    for (const auto& u : m.exogenous()) {
      if (anc.count(u.name)) continue;
      auto a = marginalise(post.joint, {u.name, starred(u.name)}).tabular();
      auto b = marginalise(prior_pairs, {u.name, starred(u.name)}).tabular();
      ASSERT_LT(total_variation(a, b), 1e-10) << u.name;
      ++checked;
    }
  }
  EXPECT_GT(checked, 10);
}

TEST(Backtracking, ReducedFormDeterminesProbabilities) {
  Domain d = Domain::finite({0, 1, 2});
  std::vector<VariableDecl> exo{{"U", d}};
  std::vector<VariableDecl> endo{{"X", d}, {"Y", d}};
  std::vector<CausalModel> models{make_model(exo, endo, {{"X", "U"}, {"Y", "X"}}),
                                  make_model(exo, endo, {{"Y", "U"}, {"X", "Y"}}),
                                  make_model(exo, endo, {{"X", "U"}, {"Y", "U"}})};
  auto prior = categorical("U", d, {0.2, 0.5, 0.3});
  KernelSpec dist = of_kind(KernelKind::DistanceBased);
  dist.distance.terms = {{"U", DistanceTerm::Kind::Absolute, 0.7}};
  auto k = BacktrackingConditional::bind(dist, exo, prior);
  for (double ys : {0, 1, 2})
    for (double zv : {0, 1, 2}) {
      double p0 = backtracking_joint_probability(models[0], k, Assignment{{"Y", ys}}, Assignment{{"X", zv}});
      for (int i = 1; i < 3; ++i)
        EXPECT_EQ(backtracking_joint_probability(models[i], k, Assignment{{"Y", ys}}, Assignment{{"X", zv}}), p0);
    }
}

TEST(Backtracking, LawsHoldInBothWorlds) {
  std::mt19937 rng(33);
  for (int trial = 0; trial < 30; ++trial) {
    auto r = random_finite_model(rng, 4, 4);
    const auto& m = r.model;
    auto k = BacktrackingConditional::bind(stability(0.5), m.exogenous(), r.prior);
    const auto& xv = m.endogenous().back();
    const auto& zv = m.endogenous().front();
    Assignment x_star{{xv.name, xv.domain.values().back()}};
    Assignment z{{zv.name, zv.domain.values().front()}};
    CrossWorldPosterior post{TabularDistribution{}, TabularDistribution{}, "", {}};
    try {
      post = cross_world_abduction(m, k, x_star, z);
    } catch (const Error&) {
      continue;
    }
    const auto& t = post.joint.tabular();
    const std::size_t e = m.exogenous().size();
    for (std::size_t row = 0; row < t.rows(); ++row) {
      Assignment u, us;
      for (std::size_t j = 0; j < e; ++j) {
        u.set(m.exogenous()[j].name, t.row(row)[j]);
        us.set(m.exogenous()[j].name, t.row(row)[e + j]);
      }
      ASSERT_EQ(*m.solve(u).get(zv.name), *z.get(zv.name));
      ASSERT_EQ(*m.solve(us).get(xv.name), *x_star.get(xv.name));
    }
  }
}

TEST(Backtracking, FactualMarginalWithoutAntecedentIsAbduction) {
  std::mt19937 rng(34);
  for (int trial = 0; trial < 30; ++trial) {
    auto r = random_finite_model(rng, 4, 4);
    const auto& m = r.model;
    auto k = BacktrackingConditional::bind(stability(0.3), m.exogenous(), r.prior);
    const auto& zv = m.endogenous()[rng() % m.endogenous().size()];
    Assignment z{{zv.name, zv.domain.values()[rng() % zv.domain.size()]}};
    std::vector<std::string> exo;
    for (const auto& d : m.exogenous()) exo.push_back(d.name);
    try {
      auto post = cross_world_abduction(m, k, {}, z);
      auto a = marginalise(post.joint, exo).tabular();
      auto b = abduction(m, r.prior, z).tabular();
      ASSERT_LT(total_variation(a, b), 1e-12);
    } catch (const Error& e) {
      ASSERT_EQ(e.kind(), ErrorKind::ZeroProbabilityEvidence);
    }
  }
}

TEST(Backtracking, FiniteImportanceSamplerAgreesWithExact) {
  auto m = firing_squad();
  auto k = BacktrackingConditional::bind(stability(0.6), m.exogenous(), bernoulli("U", 0.3));
  EngineOptions is;
  is.backend = Backend::MonteCarlo;
  is.samples = 50000;
  is.seed = 5;
  auto exact = cross_world_abduction(m, k, Assignment{{"P", 0}}, {});
  auto sampled = cross_world_abduction(m, k, Assignment{{"P", 0}}, {}, is);
  EXPECT_EQ(sampled.provenance, "importance");
  double p = probability(exact.joint.tabular(), Assignment{{"U", 1}, {"U*", 0}});
  EXPECT_NEAR(p, 0.3 * 0.4 * 0.7 / 0.7, 1e-15);
  const auto& parts = sampled.joint.particles();
  double q = 0.0;
  for (std::size_t i = 0; i < parts.rows(); ++i)
    if (parts.row(i)[0] == 1 && parts.row(i)[1] == 0) q += parts.weights[i];
  EXPECT_NEAR(q, p, 4 * std::sqrt(p * (1 - p) / parts.ess));
  double mass = backtracking_joint_probability(m, k, Assignment{{"P", 0}}, Assignment{{"A", 1}});
  EXPECT_NEAR(mass, 0.3 * 0.4 * 0.7, 1e-15);
  double mass_mc = backtracking_joint_probability(m, k, Assignment{{"P", 0}}, Assignment{{"A", 1}}, is);
  EXPECT_NEAR(mass_mc, mass, 4 * std::sqrt(mass * (1 - mass) / 50000));
}

TEST(Backtracking, WorkerCountDoesNotChangeParticles) {
  auto m = linear_chain();
  auto k = chain_kernel(1.0, 1.0);
  EngineOptions a;
  a.backend = Backend::MonteCarlo;
  a.samples = 3000;
  a.seed = 9;
  EngineOptions b = a;
  b.workers = 3;
  auto pa = cross_world_abduction(m, k, Assignment{{"Y", 3}}, kChainFacts, a).joint.particles();
  auto pb = cross_world_abduction(m, k, Assignment{{"Y", 3}}, kChainFacts, b).joint.particles();
  EXPECT_EQ(pa.values, pb.values);
  EXPECT_EQ(pa.weights, pb.weights);
}

TEST(Backtracking, NonAffineContinuousPointEvidenceUnsupported) {
  auto m = make_model({real("U")}, {real("X")}, {{"X", "U * U"}});
  KernelSpec spec = of_kind(KernelKind::GaussianKernel);
  spec.sigma = Eigen::MatrixXd::Identity(1, 1);
  auto k = BacktrackingConditional::bind(spec, m.exogenous(), standard_normal({"U"}));
  EXPECT_EQ(error_kind([&] { cross_world_abduction(m, k, Assignment{{"X", 1}}, {}); }),
            ErrorKind::UnsupportedBackend);
}
