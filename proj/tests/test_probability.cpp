#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"

using namespace scmcf;
using namespace scmcf::testing;

namespace {

void expect_matrix_near(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double tol) {
  ASSERT_EQ(a.rows(), b.rows());
  ASSERT_EQ(a.cols(), b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      EXPECT_NEAR(a(i, j), b(i, j), tol) << "entry (" << i << "," << j << ")";
    }
  }
}

Eigen::MatrixXd mat(std::initializer_list<std::initializer_list<double>> rows) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

}  // namespace

TEST(Probability, PushforwardOfLinearChain) {
  auto m = linear_chain();
  auto prior = standard_normal({"U_X", "U_Y", "U_Z"});
  auto y = endogenous_distribution(m, prior, {"Y"});
  ASSERT_EQ(y.kind(), Distribution::Kind::Gaussian);
  EXPECT_NEAR(y.gaussian().mean(0), 0.0, 1e-12);
  EXPECT_NEAR(y.gaussian().covariance(0, 0), 2.0, 1e-12);
}

TEST(Probability, ObservationalConditioningOnY) {
  // Var Y = 2, Cov(X,Y) = 1, Cov(Z,Y) = 3, Var Z = 6, Cov(X,Z) = 2, so given
  // Y = 3 the (Z,Z) entry is 6 - 9/2.
  auto m = linear_chain();
  auto prior = standard_normal({"U_X", "U_Y", "U_Z"});
  auto post = observational_query(m, prior, {{"Y", 3}}, {"X", "Z"});
  ASSERT_EQ(post.kind(), Distribution::Kind::Gaussian);
  expect_matrix_near(post.gaussian().mean, vec({1.5, 4.5}), 1e-10);
  expect_matrix_near(post.gaussian().covariance, mat({{0.5, 0.5}, {0.5, 1.5}}), 1e-10);
}

TEST(Probability, ObservationalConditioningMatchesParticleOracle) {
  // Independent route: sample the prior, keep particles with Y in a thin band.
  auto m = linear_chain();
  auto prior = standard_normal({"U_X", "U_Y", "U_Z"});
  EngineOptions mc;
  mc.backend = Backend::MonteCarlo;
  mc.samples = 400000;
  auto parts = endogenous_distribution(m, prior, {"X", "Y", "Z"}, mc).particles();
  double n = 0, sx = 0, sz = 0, sxx = 0, szz = 0, sxz = 0;
  for (std::size_t r = 0; r < parts.rows(); ++r) {
    auto row = parts.row(r);
    if (std::abs(row[1] - 3.0) > 0.05) continue;
    n += 1;
    sx += row[0];
    sz += row[2];
    sxx += row[0] * row[0];
    szz += row[2] * row[2];
    sxz += row[0] * row[2];
  }
  ASSERT_GT(n, 500);
  double mx = sx / n, mz = sz / n;
  EXPECT_NEAR(mx, 1.5, 0.1);
  EXPECT_NEAR(mz, 4.5, 0.15);
  EXPECT_NEAR(sxx / n - mx * mx, 0.5, 0.1);
  EXPECT_NEAR(sxz / n - mx * mz, 0.5, 0.1);
  EXPECT_NEAR(szz / n - mz * mz, 1.5, 0.2);
}

TEST(Probability, AbductionToPointMass) {
  auto m = linear_chain();
  auto prior = standard_normal({"U_X", "U_Y", "U_Z"});
  auto form = affine_reduced_form(m);
  ASSERT_TRUE(form);
  LinearConstraint c{form->A, vec({1, 2, 2}) - form->b};
  auto post = condition_on(prior, c).gaussian();
  expect_matrix_near(post.mean, vec({1, 1, -1}), 1e-10);
  expect_matrix_near(post.covariance, Eigen::MatrixXd::Zero(3, 3), 1e-10);
}

TEST(Probability, FiringSquadPushforwardAndAbduction) {
  auto fs = firing_squad();
  const double theta = 0.3;
  auto prior = bernoulli("U", theta);
  auto p = endogenous_distribution(fs, prior, {"P"}).tabular();
  EXPECT_NEAR(probability(p, {{"P", 1}}), theta, 1e-15);

  auto joint = endogenous_distribution(fs, prior, {"U", "C"});
  auto post = marginalise(condition_on(joint, Assignment{{"C", 1}}), {"U"}).tabular();
  ASSERT_EQ(post.rows(), 1u);
  EXPECT_EQ(post.row(0)[0], 1.0);
  EXPECT_EQ(post.weights[0], 1.0);
}

TEST(Probability, EmptyEvidenceIsIdentity) {
  auto prior = bernoulli("U", 0.3);
  auto same = condition_on(prior, Assignment{});
  EXPECT_EQ(same.tabular().weights, prior.tabular().weights);
}

TEST(Probability, ZeroProbabilityEvidence) {
  auto fs = firing_squad();
  auto prior = make_tabular({"U"}, {Domain::boolean()}, {0, 1}, {1.0, 0.0});
  auto joint = endogenous_distribution(fs, prior, {"C"});
  try {
    condition_on(joint, Assignment{{"C", 1}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::ZeroProbabilityEvidence);
  }
  // Gaussian: X = U, Y = X; the constraint X=1, Y=2 has no support.
  auto xy = make_model({real("U")}, {real("X"), real("Y")}, {{"X", "U"}, {"Y", "X"}});
  auto g = endogenous_distribution(xy, standard_normal({"U"}), {"X", "Y"});
  EXPECT_THROW(condition_on(g, Assignment{{"X", 1}, {"Y", 2}}), Error);
  auto ok = condition_on(g, Assignment{{"X", 1}, {"Y", 1}}).gaussian();
  EXPECT_NEAR(ok.mean(1), 1.0, 1e-12);
}

TEST(Probability, Marginalise) {
  GaussianDistribution g{{"a", "b"}, vec({1.5, 4.5}), mat({{0.5, 0.5}, {0.5, 0.5}})};
  auto a = marginalise(g, {"a"}).gaussian();
  EXPECT_EQ(a.mean(0), 1.5);
  EXPECT_EQ(a.covariance(0, 0), 0.5);

  auto uni = make_tabular({"a", "b"}, {Domain::boolean(), Domain::boolean()}, {0, 0, 0, 1, 1, 0, 1, 1},
                          {0.25, 0.25, 0.25, 0.25});
  auto first = marginalise(uni, {"a"}).tabular();
  EXPECT_EQ(first.weights, (std::vector<double>{0.5, 0.5}));

  ParticleDistribution p{{"a", "b"}, {1, 2, 3, 4}, {0.25, 0.75}, 9, 0, {}};
  auto pb = marginalise(p, {"b"}).particles();
  EXPECT_EQ(pb.values, (std::vector<double>{2, 4}));
  EXPECT_EQ(pb.weights, p.weights);

  EXPECT_THROW(marginalise(uni, {"c"}), Error);
}

TEST(Probability, Product) {
  auto g = product(standard_normal({"a"}), standard_normal({"b"})).gaussian();
  EXPECT_EQ(g.covariance, Eigen::MatrixXd::Identity(2, 2));

  const double th = 0.3;
  auto bb = product(bernoulli("a", th), bernoulli("b", th)).tabular();
  ASSERT_EQ(bb.rows(), 4u);
  EXPECT_NEAR(bb.weights[0], (1 - th) * (1 - th), 1e-15);
  EXPECT_NEAR(bb.weights[1], (1 - th) * th, 1e-15);
  EXPECT_NEAR(bb.weights[2], th * (1 - th), 1e-15);
  EXPECT_NEAR(bb.weights[3], th * th, 1e-15);

  auto withpoint = product(bernoulli("a", th), point_mass({{"b", 2}}, {Domain::finite({2, 5})})).tabular();
  EXPECT_EQ(withpoint.variables, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(withpoint.rows(), 2u);
  EXPECT_EQ(withpoint.row(1)[1], 2.0);

  try {
    product(bernoulli("a", th), bernoulli("a", th));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::OverlappingVariables);
  }
}

TEST(Probability, MarginaliseRecoversProductFactors) {
  auto a = categorical("a", Domain::finite({0, 1, 2}), {0.2, 0.5, 0.3});
  auto b = bernoulli("b", 0.1);
  auto ab = product(a, b);
  EXPECT_LT(total_variation(marginalise(ab, {"a"}).tabular(), a.tabular()), 1e-15);
  EXPECT_LT(total_variation(marginalise(ab, {"b"}).tabular(), b.tabular()), 1e-15);

  GaussianDistribution g1{{"x"}, vec({1}), mat({{2}})};
  GaussianDistribution g2{{"y", "z"}, vec({0, 3}), mat({{1, 0.5}, {0.5, 1}})};
  auto gg = product(g1, g2);
  EXPECT_EQ(marginalise(gg, {"y", "z"}).gaussian().covariance, g2.covariance);
  EXPECT_EQ(marginalise(gg, {"x"}).gaussian().mean, g1.mean);
}

TEST(Probability, SamplingIsDeterministic) {
  auto pm = point_mass({{"a", 1}}, {Domain::boolean()});
  for (const auto& s : sample(pm, 5, 3)) EXPECT_EQ(s.at("a"), 1.0);

  auto n01 = standard_normal({"x"});
  auto s1 = sample(n01, 100000, 17);
  auto s2 = sample(n01, 100000, 17);
  double mean = 0;
  for (std::size_t i = 0; i < s1.size(); ++i) {
    ASSERT_EQ(s1[i], s2[i]);
    mean += s1[i].at("x");
  }
  EXPECT_NEAR(mean / 1e5, 0.0, 0.02);
}

TEST(Probability, WorkerCountDoesNotChangeParticles) {
  auto m = linear_chain();
  auto prior = standard_normal({"U_X", "U_Y", "U_Z"});
  EngineOptions a, b;
  a.backend = b.backend = Backend::MonteCarlo;
  a.samples = b.samples = 5000;
  b.workers = 4;
  auto pa = endogenous_distribution(m, prior, {"Z"}, a).particles();
  auto pb = endogenous_distribution(m, prior, {"Z"}, b).particles();
  EXPECT_EQ(pa.values, pb.values);
}

TEST(Probability, LinearGaussianMatchesParticlesWithinThreeStandardErrors) {
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> coef(-1.5, 1.5);
  for (int trial = 0; trial < 5; ++trial) {
    auto m = make_model({real("U1"), real("U2"), real("U3")}, {real("A"), real("B"), real("C")},
                        {{"A", format_number(coef(rng)) + " + U1"},
                         {"B", format_number(coef(rng)) + " * A + U2"},
                         {"C", format_number(coef(rng)) + " * A + " + format_number(coef(rng)) + " * B + U3"}});
    auto prior = standard_normal({"U1", "U2", "U3"});
    auto exact = endogenous_distribution(m, prior, {"A", "B", "C"}).gaussian();
    EngineOptions mc;
    mc.backend = Backend::MonteCarlo;
    mc.samples = 100000;
    mc.seed = static_cast<std::uint64_t>(trial);
    auto parts = endogenous_distribution(m, prior, {"A", "B", "C"}, mc);
    auto mom = moments(parts);
    const double n = static_cast<double>(mc.samples);
    for (Eigen::Index i = 0; i < 3; ++i) {
      double se = std::sqrt(exact.covariance(i, i) / n);
      EXPECT_NEAR(mom.mean(i), exact.mean(i), 3 * se + 1e-12);
      for (Eigen::Index j = 0; j < 3; ++j) {
        // Var of the product estimator for jointly Gaussian variables.
        double sij = exact.covariance(i, j);
        double se_cov = std::sqrt((exact.covariance(i, i) * exact.covariance(j, j) + sij * sij) / n);
        EXPECT_NEAR(mom.covariance(i, j), sij, 3 * se_cov);
      }
    }
  }
}

TEST(Probability, GaussianConditioningMatchesGridOracle) {
  // Joint over (a, b, c); condition on c = 0.7. The oracle evaluates the joint
  // density on a grid slice and normalizes; the analytic conditional is
  // discretized on the same grid.
  GaussianDistribution joint{{"a", "b", "c"}, vec({0.3, -1, 2}),
                             mat({{2.0, 0.6, 0.8}, {0.6, 1.0, -0.3}, {0.8, -0.3, 1.5}})};
  auto cond = condition_on(joint, Assignment{{"c", 0.7}}).gaussian();
  const double sa = std::sqrt(cond.covariance(0, 0));
  const double sb = std::sqrt(cond.covariance(1, 1));
  const int steps = 240;
  std::vector<double> oracle, analytic;
  GaussianDistribution cab{{"a", "b"}, cond.mean.head(2), cond.covariance.topLeftCorner(2, 2)};
  for (int i = 0; i <= steps; ++i) {
    for (int j = 0; j <= steps; ++j) {
      double a = cond.mean(0) + (-6 + 0.05 * i) * sa;
      double b = cond.mean(1) + (-6 + 0.05 * j) * sb;
      oracle.push_back(std::exp(gaussian_log_density(joint, vec({a, b, 0.7}))));
      analytic.push_back(std::exp(gaussian_log_density(cab, vec({a, b}))));
    }
  }
  double so = 0, sa2 = 0;
  for (std::size_t k = 0; k < oracle.size(); ++k) {
    so += oracle[k];
    sa2 += analytic[k];
  }
  double tv = 0;
  for (std::size_t k = 0; k < oracle.size(); ++k) tv += std::abs(oracle[k] / so - analytic[k] / sa2);
  EXPECT_LT(0.5 * tv, 0.02);
}

TEST(Probability, TotalMassIsOne) {
  auto fs = firing_squad();
  auto prior = bernoulli("U", 0.37);
  auto t = endogenous_distribution(fs, prior, {"C", "A", "B", "P"}).tabular();
  double s = 0;
  for (double w : t.weights) s += w;
  EXPECT_NEAR(s, 1.0, kNormalizationTolerance);
}
