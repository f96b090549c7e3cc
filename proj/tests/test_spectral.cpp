#include <gtest/gtest.h>

#include <random>

#include "overlap/spectral.hpp"
#include "overlap/study.hpp"
#include "test_util.hpp"

using namespace overlap;
using testutil::expect_error;

namespace {

MercerSpec orthonormal_spec(std::size_t n_grid, Vector c, Vector a) {
  const Grid grid = Grid::unit(n_grid);
  const Matrix basis = orthonormalize(sine_basis(grid, static_cast<std::size_t>(c.size())), grid.trapezoid_weights());
  return MercerSpec(grid, std::move(c), std::move(a), basis);
}

FunctionalSampleSet two_groups(const MercerSpec& spec, std::size_t n, std::uint64_t seed) {
  return concat(sample_paths(spec, n, seed, GroupMean::zero), sample_paths(spec, n, seed + 1, GroupMean::m1));
}

}  // namespace

TEST(Eigendecomposition, IdenticalSamplesHaveZeroSpectrum) {
  const Grid g = Grid::unit(6);
  FunctionalSampleSet s{g, Matrix::Constant(10, 6, 0.7), std::vector<int>(10, 0)};
  for (int i = 5; i < 10; ++i) s.group[static_cast<std::size_t>(i)] = 1;
  const auto est = empirical_eigendecomposition(s, 3, {1e-6, 0.0});
  for (Eigen::Index j = 0; j < 3; ++j) {
    EXPECT_EQ(est.raw_eigenvalues(j), 0.0);
    EXPECT_EQ(est.eigenvalues(j), 1e-6);
  }
}

TEST(Eigendecomposition, RecoversKnownSpectrum) {
  Vector c(3);
  c << 1.0, 0.25, 1.0 / 9.0;
  const MercerSpec spec = orthonormal_spec(32, c, Vector::Zero(3));
  const auto s = sample_paths(spec, 5000, 77, GroupMean::zero);
  const auto est = empirical_eigendecomposition(s, 3);
  for (Eigen::Index j = 0; j < 3; ++j) EXPECT_NEAR(est.eigenvalues(j), c(j), 0.1 * c(j)) << "term " << j + 1;
}

TEST(Eigendecomposition, EigenvectorsOrthonormalAndValuesSorted) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd;
  for (int rep = 0; rep < 5; ++rep) {
    const Grid g({0.0, 0.05, 0.2, 0.3, 0.55, 0.6, 0.9, 1.0});
    FunctionalSampleSet s{g, Matrix(40, 8), std::vector<int>(40, 0)};
    for (Eigen::Index r = 0; r < 40; ++r)
      for (Eigen::Index c = 0; c < 8; ++c) s.values(r, c) = nd(rng) * (1.0 + static_cast<double>(c));
    for (std::size_t i = 20; i < 40; ++i) s.group[i] = 1;
    const auto est = empirical_eigendecomposition(s, 6);
    const Matrix gram = est.eigenvectors.transpose() * est.quadrature_weights.asDiagonal() * est.eigenvectors;
    EXPECT_LE((gram - Matrix::Identity(6, 6)).cwiseAbs().maxCoeff(), 1e-8);
    for (Eigen::Index j = 1; j < 6; ++j) EXPECT_LE(est.eigenvalues(j), est.eigenvalues(j - 1));
  }
}

TEST(Eigendecomposition, TooManyTermsRejected) {
  const MercerSpec spec = orthonormal_spec(4, Vector::Ones(1), Vector::Zero(1));
  const auto s = sample_paths(spec, 10, 1, GroupMean::zero);
  expect_error(ErrorKind::invalid_config, [&] { empirical_eigendecomposition(s, 5); });
}

TEST(ProjectMean, EqualMeansGiveSmallCoefficients) {
  Vector c(3);
  c << 1.0, 0.5, 0.25;
  const MercerSpec spec = orthonormal_spec(16, c, Vector::Zero(3));
  const auto s = two_groups(spec, 2000, 5);
  const auto est = project_mean_difference(s, empirical_eigendecomposition(s, 3));
  for (Eigen::Index j = 0; j < 3; ++j) {
    const double se = std::sqrt(est.eigenvalues(j) * est.sampling_variance);
    EXPECT_LE(std::abs(est.mean_coeffs(j)), 3.0 * se) << "term " << j + 1;
  }
}

TEST(ProjectMean, ExactBasisGivesExactCoefficients) {
  Vector a(3);
  a << 2.0, 0.0, 0.0;
  const MercerSpec spec = orthonormal_spec(16, Vector::Zero(3), a);
  const auto s = two_groups(spec, 3, 1);
  SpectralEstimate exact;
  exact.eigenvectors = spec.basis().transpose();
  exact.quadrature_weights = spec.grid().trapezoid_weights();
  exact.eigenvalues = Vector::Ones(3);
  const auto est = project_mean_difference(s, exact);
  EXPECT_NEAR(est.mean_coeffs(0), 2.0, 1e-12);
  EXPECT_NEAR(est.mean_coeffs(1), 0.0, 1e-12);
  EXPECT_NEAR(est.mean_coeffs(2), 0.0, 1e-12);
}

TEST(ProjectMean, RecoversSimulatedCoefficients) {
  Vector c(3), a(3);
  c << 1.0, 0.25, 1.0 / 9.0;
  a << 1.0, 0.5, 0.25;
  const MercerSpec spec = orthonormal_spec(32, c, a);
  const auto s = two_groups(spec, 5000, 21);
  const auto est = project_mean_difference(s, empirical_eigendecomposition(s, 3));
  // Estimated eigenvectors carry an arbitrary sign.
  for (Eigen::Index j = 0; j < 3; ++j) EXPECT_NEAR(std::abs(est.mean_coeffs(j)), a(j), 0.1) << "term " << j + 1;
}

TEST(ProjectMean, MissingGroupRejected) {
  const MercerSpec spec = orthonormal_spec(4, Vector::Ones(1), Vector::Zero(1));
  const auto s = sample_paths(spec, 10, 1, GroupMean::zero);
  expect_error(ErrorKind::missing_group, [&] { project_mean_difference(s, empirical_eigendecomposition(s, 1)); });
}

TEST(PhaseStatistic, ZeroMeanGivesZeroSums) {
  const auto r = phase_transition_statistic(std::vector<double>{1.0, 0.5, 0.1}, std::vector<double>{0.0, 0.0, 0.0});
  for (double s : r.partial_sums) EXPECT_EQ(s, 0.0);
  EXPECT_EQ(overlap_verdict(r), OverlapVerdict::equivalent_overlap_plausible);
}

TEST(PhaseStatistic, ConvergentSeries) {
  std::vector<double> c, a;
  double direct = 0.0;
  for (int j = 1; j <= 1000; ++j) {
    c.push_back(1.0 / (j * static_cast<double>(j)));
    a.push_back(1.0 / (j * static_cast<double>(j)));
    direct += 1.0 / (j * static_cast<double>(j));
  }
  const auto r = phase_transition_statistic(c, a);
  EXPECT_NEAR(r.total(), direct, 1e-9);
  EXPECT_NEAR(r.total(), std::numbers::pi * std::numbers::pi / 6.0, 0.0011);
  EXPECT_LE(r.growth_ratio, 1.1);
  EXPECT_EQ(overlap_verdict(r), OverlapVerdict::equivalent_overlap_plausible);
}

TEST(PhaseStatistic, DivergentSeries) {
  std::vector<double> c, a;
  for (int j = 1; j <= 20; ++j) {
    c.push_back(std::pow(2.0, -j));
    a.push_back(1.0 / j);
  }
  const auto r = phase_transition_statistic(c, a);
  EXPECT_GT(r.partial_sums[19] / r.partial_sums[9], 100.0);
  EXPECT_EQ(overlap_verdict(r), OverlapVerdict::orthogonal_overlap_violated);
}

TEST(PhaseStatistic, MiddleGrowthIsInconclusive) {
  PhaseTransitionReport r;
  r.partial_sums = {1.0, 1.5};
  r.growth_ratio = 1.5;
  EXPECT_EQ(overlap_verdict(r), OverlapVerdict::inconclusive);
}

TEST(PhaseStatistic, SumsNondecreasingAndSignInvariant) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> c(15), a(15), flipped(15);
    double prev = 2.0;
    for (std::size_t j = 0; j < 15; ++j) {
      prev *= 0.3 + 0.7 * std::abs(u(rng));
      c[j] = prev;
      a[j] = u(rng);
      flipped[j] = j % 2 ? -a[j] : a[j];
    }
    const auto r = phase_transition_statistic(c, a);
    for (std::size_t j = 1; j < 15; ++j) EXPECT_GE(r.partial_sums[j], r.partial_sums[j - 1]);
    EXPECT_EQ(r.partial_sums, phase_transition_statistic(c, flipped).partial_sums);
  }
}

TEST(PhaseStatistic, NoiseFloorDeclaresNullPlausible) {
  PhaseTransitionReport r;
  r.partial_sums = {0.001, 0.01};
  r.growth_ratio = 10.0;
  r.noise_floor = 0.02;
  EXPECT_EQ(overlap_verdict(r), OverlapVerdict::equivalent_overlap_plausible);
  r.noise_floor = 0.0;
  EXPECT_EQ(overlap_verdict(r), OverlapVerdict::orthogonal_overlap_violated);
}

// Convergent and divergent specs simulated on a 128-point grid: the growth
// ordering must hold for every seed.
TEST(PhaseStatistic, SimulatedGrowthOrdering) {
  const Grid g = Grid::unit(128);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    double growth[2];
    int k = 0;
    for (auto scenario : {MercerScenario::convergent, MercerScenario::divergent}) {
      const MercerSpec spec = scenario_mercer(scenario, g, 50);
      auto s = concat(sample_paths(spec, 1000, seed * 10, GroupMean::zero),
                      sample_paths(spec, 1000, seed * 10 + 1, GroupMean::m1));
      s = add_observation_noise(std::move(s), 0.05, seed * 10 + 2);
      const auto est = project_mean_difference(s, empirical_eigendecomposition(s, 20));
      growth[k++] = phase_transition_statistic(est).growth_ratio;
    }
    EXPECT_LT(growth[0], growth[1]) << "seed " << seed;
    EXPECT_LE(growth[0], 1.1);
    EXPECT_GE(growth[1], 2.0);
  }
}
