#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "oracles.hpp"
#include "overlap/divergence.hpp"
#include "test_util.hpp"

using namespace overlap;
using testutil::expect_error;

namespace {

GaussianMeasurePair univariate(double m0, double v0, double m1, double v1) {
  Vector a(1), b(1);
  a << m0;
  b << m1;
  return {a, b, Matrix::Constant(1, 1, v0), Matrix::Constant(1, 1, v1)};
}

Matrix random_spd(std::mt19937_64& rng, Eigen::Index d) {
  std::normal_distribution<double> nd;
  Matrix a(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) a(i, j) = nd(rng);
  return a * a.transpose() + 0.5 * Matrix::Identity(d, d);
}

}  // namespace

TEST(Bhattacharyya, IdenticalPair) {
  const auto r = gaussian_bhattacharyya(univariate(0.3, 2.0, 0.3, 2.0));
  EXPECT_EQ(r.L, 0.0);
  EXPECT_EQ(r.D2, 0.0);
  EXPECT_EQ(r.bhat_distance, 0.0);
  EXPECT_EQ(r.bhat_coefficient, 1.0);
}

TEST(Bhattacharyya, ShiftedUnitNormals) {
  const auto r = gaussian_bhattacharyya(univariate(0.0, 1.0, 1.0, 1.0));
  EXPECT_NEAR(r.L, 0.0, 1e-15);
  EXPECT_NEAR(r.D2, 1.0, 1e-15);
  EXPECT_NEAR(r.bhat_distance, 0.125, 1e-15);
  EXPECT_NEAR(r.bhat_coefficient, std::exp(-0.125), 1e-12);
  EXPECT_NEAR(r.bhat_coefficient, 0.88250, 1e-5);
  EXPECT_NEAR(r.bhat_coefficient, oracle::bhattacharyya_quadrature(0.0, 1.0, 1.0, 1.0), 1e-9);
}

TEST(Bhattacharyya, ScaledNormals) {
  const auto r = gaussian_bhattacharyya(univariate(0.0, 1.0, 0.0, 4.0));
  EXPECT_EQ(r.D2, 0.0);
  EXPECT_NEAR(r.L, 2.0 * std::log(2.5) - std::log(4.0), 1e-14);
  EXPECT_NEAR(r.L, 0.44629, 1e-5);
  EXPECT_NEAR(r.bhat_coefficient, 0.89443, 1e-5);
  EXPECT_NEAR(r.bhat_coefficient, oracle::bhattacharyya_quadrature(0.0, 1.0, 0.0, 2.0), 1e-9);
}

TEST(Bhattacharyya, UnivariateCasesMatchQuadrature) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> mean(-2.0, 2.0), sd(0.3, 3.0);
  for (int rep = 0; rep < 20; ++rep) {
    const double m0 = mean(rng), m1 = mean(rng), s0 = sd(rng), s1 = sd(rng);
    const auto r = gaussian_bhattacharyya(univariate(m0, s0 * s0, m1, s1 * s1));
    EXPECT_NEAR(r.bhat_coefficient, oracle::bhattacharyya_quadrature(m0, s0, m1, s1), 1e-8);
    EXPECT_NEAR(gaussian_relative_entropy(univariate(m0, s0 * s0, m1, s1 * s1)),
                oracle::kl_quadrature(m0, s0, m1, s1) + oracle::kl_quadrature(m1, s1, m0, s0), 1e-7);
  }
}

TEST(Bhattacharyya, SymmetricUnderSwap) {
  std::mt19937_64 rng(5);
  for (Eigen::Index d = 1; d <= 4; ++d) {
    const GaussianMeasurePair p{Vector::Random(d), Vector::Random(d), random_spd(rng, d), random_spd(rng, d)};
    const auto a = gaussian_bhattacharyya(p), b = gaussian_bhattacharyya(p.swapped());
    EXPECT_NEAR(a.L, b.L, 1e-12);
    EXPECT_NEAR(a.D2, b.D2, 1e-12);
    EXPECT_NEAR(gaussian_relative_entropy(p), gaussian_relative_entropy(p.swapped()), 1e-10);
  }
}

TEST(Bhattacharyya, EqualCovariancesGiveZeroL) {
  std::mt19937_64 rng(8);
  const Matrix s = random_spd(rng, 3);
  const auto r = gaussian_bhattacharyya({Vector::Zero(3), Vector::Ones(3), s, s});
  EXPECT_NEAR(r.L, 0.0, 1e-12);
  EXPECT_NEAR(r.D2, Vector::Ones(3).dot(s.ldlt().solve(Vector::Ones(3))), 1e-10);
}

TEST(Bhattacharyya, ScalingMeanDifferenceIsMonotone) {
  std::mt19937_64 rng(13);
  const Matrix s0 = random_spd(rng, 2), s1 = random_spd(rng, 2);
  const Vector delta = Vector::Random(2);
  const auto base = gaussian_bhattacharyya({Vector::Zero(2), delta, s0, s1});
  double prev = base.bhat_coefficient;
  for (double s : {1.5, 2.0, 3.0, 5.0}) {
    const auto r = gaussian_bhattacharyya({Vector::Zero(2), s * delta, s0, s1});
    EXPECT_NEAR(r.D2, s * s * base.D2, 1e-10 * s * s);
    EXPECT_LT(r.bhat_coefficient, prev);
    prev = r.bhat_coefficient;
  }
}

TEST(Bhattacharyya, SingularAverageIsAnError) {
  Matrix zero = Matrix::Zero(2, 2);
  expect_error(ErrorKind::singular_covariance,
               [&] { gaussian_bhattacharyya({Vector::Zero(2), Vector::Ones(2), zero, zero}); });
  expect_error(ErrorKind::invalid_config,
               [&] { gaussian_bhattacharyya({Vector::Zero(2), Vector::Ones(3), zero, zero}); });
}

TEST(Bhattacharyya, SingularGroupCovarianceMakesLInfinite) {
  Matrix rank1(2, 2);
  rank1 << 1.0, 0.0, 0.0, 0.0;
  const GaussianMeasurePair p{Vector::Zero(2), Vector::Zero(2), Matrix::Identity(2, 2), rank1};
  const auto r = divergence_report(p);
  EXPECT_TRUE(std::isinf(r.L));
  EXPECT_EQ(r.bhat_coefficient, 0.0);
  EXPECT_TRUE(std::isinf(*r.J));
  expect_error(ErrorKind::singular_covariance, [&] { gaussian_relative_entropy(p); });
}

TEST(RelativeEntropy, HandCases) {
  EXPECT_EQ(gaussian_relative_entropy(univariate(1.0, 3.0, 1.0, 3.0)), 0.0);
  EXPECT_NEAR(gaussian_relative_entropy(univariate(0.0, 1.0, 1.0, 1.0)), 1.0, 1e-14);
  EXPECT_NEAR(gaussian_relative_entropy(univariate(0.0, 1.0, 0.0, 4.0)), 1.125, 1e-14);
  EXPECT_NEAR(oracle::kl_quadrature(0.0, 1.0, 0.0, 2.0), 0.31815, 1e-5);
  EXPECT_NEAR(oracle::kl_quadrature(0.0, 2.0, 0.0, 1.0), 0.80685, 1e-5);
}

TEST(RelativeEntropy, PositiveUnlessEqual) {
  std::mt19937_64 rng(17);
  for (int rep = 0; rep < 10; ++rep) {
    const GaussianMeasurePair p{Vector::Random(3), Vector::Random(3), random_spd(rng, 3), random_spd(rng, 3)};
    EXPECT_GT(gaussian_relative_entropy(p), 0.0);
  }
}

TEST(Dichotomy, Examples) {
  DivergenceResult same;
  same.J = 0.0;
  EXPECT_EQ(dichotomy_verdict(same), MeasureVerdict::equivalent);
  DivergenceResult tiny;
  tiny.bhat_coefficient = 1e-12;
  EXPECT_EQ(dichotomy_verdict(tiny, {1e-8, 1e6}), MeasureVerdict::orthogonal);
  DivergenceResult huge_j;
  huge_j.J = 2e6;
  EXPECT_EQ(dichotomy_verdict(huge_j), MeasureVerdict::orthogonal);
}

TEST(Dichotomy, GrowingMahalanobisCrossesAt148) {
  int first = -1;
  for (int n = 1; n <= 400; ++n) {
    Vector m1(1);
    m1 << std::sqrt(static_cast<double>(n));
    const auto r = divergence_report({Vector::Zero(1), m1, Matrix::Identity(1, 1), Matrix::Identity(1, 1)});
    if (dichotomy_verdict(r) == MeasureVerdict::orthogonal) {
      first = n;
      break;
    }
  }
  EXPECT_EQ(first, 148);
}

TEST(LikelihoodRatio, Bounds) {
  auto b = lr_bounds(0.1, 0.5);
  EXPECT_NEAR(b.lower, 1.0 / 9.0, 1e-15);
  EXPECT_NEAR(b.upper, 9.0, 1e-14);
  b = lr_bounds(0.25, 0.5);
  EXPECT_NEAR(b.lower, 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(b.upper, 3.0, 1e-15);
  expect_error(ErrorKind::invalid_config, [] { lr_bounds(0.5, 0.5); });
  expect_error(ErrorKind::invalid_config, [] { lr_bounds(0.0, 0.5); });
}

TEST(LikelihoodRatio, TwoPointBoundaryHolds) {
  const auto d = DiscreteDistributionPair::from({0.5, 0.5}, {0.2, 0.8});
  EXPECT_DOUBLE_EQ(d.alpha, 0.5);
  const auto c = check_overlap_lr_equivalence(d, 0.2);
  EXPECT_EQ(c.outcome(), OverlapAgreement::both_hold);
}

TEST(LikelihoodRatio, DeterministicAssignmentFails) {
  const auto d = DiscreteDistributionPair::from({0.3, 0.7}, {0.0, 0.6});
  for (double eta : {1e-6, 0.1, 0.4}) EXPECT_EQ(check_overlap_lr_equivalence(d, eta).outcome(), OverlapAgreement::both_fail);
}

TEST(LikelihoodRatio, ZeroMassPointsIgnored) {
  const auto d = DiscreteDistributionPair::from({0.0, 0.5, 0.5}, {0.0, 0.3, 0.7});
  EXPECT_EQ(check_overlap_lr_equivalence(d, 0.3).outcome(), OverlapAgreement::both_hold);
}

TEST(LikelihoodRatio, AgreesWithExactOracleOnRationalFixtures) {
  std::mt19937_64 rng(2718);
  std::uniform_int_distribution<int> size(1, 10), weight(0, 9), level(0, 20), eta(1, 9);
  int checked = 0;
  while (checked < 1000) {
    oracle::RationalFixture f;
    const int m = size(rng);
    for (int i = 0; i < m; ++i) {
      f.w.push_back(weight(rng));
      f.k.push_back(level(rng));
    }
    f.h = eta(rng);
    std::int64_t W = 0, A = 0;
    for (int i = 0; i < m; ++i) W += f.w[i], A += f.w[i] * f.k[i];
    if (W == 0 || A == 0 || A == W * f.D) continue;  // alpha must be inside (0, 1)
    std::vector<double> pz, e;
    for (int i = 0; i < m; ++i) {
      pz.push_back(static_cast<double>(f.w[i]) / static_cast<double>(W));
      e.push_back(static_cast<double>(f.k[i]) / static_cast<double>(f.D));
    }
    DiscreteDistributionPair d{pz, e, 0.0};
    for (int i = 0; i < m; ++i) d.alpha += pz[i] * e[i];
    if (std::abs(std::accumulate(pz.begin(), pz.end(), 0.0) - 1.0) > 1e-12) continue;
    const bool strict = oracle::strict_overlap_exact(f);
    ASSERT_EQ(strict, oracle::lr_bounded_exact(f)) << "oracle disagrees with itself";
    const auto c = check_overlap_lr_equivalence(d, static_cast<double>(f.h) / static_cast<double>(f.D));
    EXPECT_NE(c.outcome(), OverlapAgreement::disagreement);
    EXPECT_EQ(c.strict_overlap, strict);
    EXPECT_EQ(c.lr_bounded, strict);
    ++checked;
  }
}

TEST(MonteCarlo, IdenticalPairIsOne) {
  const auto mc = monte_carlo_bhattacharyya(univariate(0.0, 1.0, 0.0, 1.0), 100000, 1);
  EXPECT_NEAR(mc.estimate, 1.0, 1e-12);
}

TEST(MonteCarlo, ShiftedUnitNormals) {
  const auto mc = monte_carlo_bhattacharyya(univariate(0.0, 1.0, 1.0, 1.0), 1000000, 2);
  EXPECT_NEAR(mc.estimate, 0.8825, 0.005);
  EXPECT_LE(std::abs(mc.estimate - std::exp(-0.125)), 4.0 * mc.standard_error);
}

TEST(MonteCarlo, BivariateShift) {
  const GaussianMeasurePair p{Vector::Zero(2), Vector::Ones(2), Matrix::Identity(2, 2), Matrix::Identity(2, 2)};
  const auto mc = monte_carlo_bhattacharyya(p, 1000000, 3);
  EXPECT_NEAR(mc.estimate, std::exp(-0.25), 0.005);
  EXPECT_NEAR(gaussian_bhattacharyya(p).bhat_coefficient, 0.7788, 1e-4);
}

TEST(MonteCarlo, SeedDeterminesEstimate) {
  const auto p = univariate(0.0, 1.0, 0.5, 2.0);
  EXPECT_EQ(monte_carlo_bhattacharyya(p, 100000, 9).estimate, monte_carlo_bhattacharyya(p, 100000, 9).estimate);
  expect_error(ErrorKind::invalid_config, [&] { monte_carlo_bhattacharyya(p, 10, 9); });
}
