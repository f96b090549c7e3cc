#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "oracles.hpp"
#include "overlap/estimators.hpp"
#include "overlap/study.hpp"
#include "test_util.hpp"

using namespace overlap;
using testutil::expect_error;

namespace {

ObservationalDataset with_outcomes(std::vector<double> y, std::vector<int> t) {
  ObservationalDataset d;
  d.y = Eigen::Map<Vector>(y.data(), static_cast<Eigen::Index>(y.size()));
  d.t = std::move(t);
  d.z = Matrix::Zero(d.y.size(), 1);
  return d;
}

ObservationalDataset with_oracle(const std::vector<double>& y0, const std::vector<double>& y1) {
  ObservationalDataset d = with_outcomes(y0, std::vector<int>(y0.size(), 0));
  d.oracle_y0 = Eigen::Map<const Vector>(y0.data(), static_cast<Eigen::Index>(y0.size()));
  d.oracle_y1 = Eigen::Map<const Vector>(y1.data(), static_cast<Eigen::Index>(y1.size()));
  return d;
}

}  // namespace

TEST(Oracle, ConstantEffect) {
  const auto d = with_oracle({0.0, 1.0, 5.0}, {2.0, 3.0, 7.0});
  EXPECT_EQ(ace_oracle(d, {true, true, true}), 2.0);
}

TEST(Oracle, SubpopulationAverage) {
  const auto d = with_oracle({0.0, 0.0, 0.0, 0.0}, {1.0, 3.0, -1.0, 5.0});
  EXPECT_EQ(ace_oracle(d, {true, true, false, false}), 2.0);
  expect_error(ErrorKind::invalid_config, [&] { ace_oracle(d, {false, false, false, false}); });
}

TEST(Oracle, MissingPotentialOutcomes) {
  const auto d = with_outcomes({1.0, 2.0}, {0, 1});
  expect_error(ErrorKind::oracle_unavailable, [&] { ace_oracle(d, {true, true}); });
}

TEST(DifferenceInMeans, HandExample) {
  const auto d = with_outcomes({3.0, 5.0, 1.0, 1.0}, {1, 1, 0, 0});
  const auto r = ace_difference_in_means(d);
  EXPECT_EQ(r.estimate, 3.0);
  EXPECT_EQ(r.n_subpop, 4u);
  EXPECT_EQ(r.n_treated, 2u);
  // Neyman: var(3,5)/2 + var(1,1)/2 = 2/2 + 0
  EXPECT_NEAR(r.se, 1.0, 1e-15);
}

TEST(DifferenceInMeans, EmptyAndOneArmedRejected) {
  const auto d = with_outcomes({3.0, 5.0, 1.0}, {1, 1, 0});
  expect_error(ErrorKind::invalid_config, [&] { ace_difference_in_means(d, {false, false, false}); });
  expect_error(ErrorKind::missing_group, [&] { ace_difference_in_means(d, {true, true, false}); });
}

TEST(DifferenceInMeans, NullEffectWithinThreeSe) {
  ConfoundedOptions o;
  o.randomized = true;
  o.effect = 0.0;
  o.n = 2000;
  const auto s = simulate_confounded(o, 5);
  const auto r = ace_difference_in_means(s.data);
  EXPECT_LE(std::abs(r.estimate), 3.0 * r.se);
}

TEST(DifferenceInMeans, LocationShiftAndPermutationInvariant) {
  ConfoundedOptions o;
  o.n = 300;
  auto s = simulate_confounded(o, 6);
  const auto base = ace_difference_in_means(s.data);
  auto shifted = s.data;
  shifted.y.array() += 17.5;
  EXPECT_NEAR(ace_difference_in_means(shifted).estimate, base.estimate, 1e-12);
  std::vector<std::size_t> perm(300);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(1));
  EXPECT_NEAR(ace_difference_in_means(s.data.rows(perm)).estimate, base.estimate, 1e-12);
  const auto ipw = ace_ipw(s.data, s.true_scores, std::vector<bool>(300, true));
  std::vector<double> permuted_scores(300);
  for (std::size_t i = 0; i < 300; ++i) permuted_scores[i] = s.true_scores[perm[i]];
  EXPECT_NEAR(ace_ipw(s.data.rows(perm), permuted_scores, std::vector<bool>(300, true)).estimate, ipw.estimate,
              1e-12);
}

TEST(Ipw, ConstantScoresEqualDifferenceInMeans) {
  ConfoundedOptions o;
  o.randomized = true;
  o.n = 500;
  const auto s = simulate_confounded(o, 7);
  const std::vector<double> half(500, 0.5);
  EXPECT_EQ(ace_ipw(s.data, half, std::vector<bool>(500, true)).estimate, ace_difference_in_means(s.data).estimate);
}

TEST(Ipw, TrueScoresRecoverEffect) {
  ConfoundedOptions o;
  o.n = 2000;
  const auto s = simulate_confounded(o, 8);
  const auto naive = ace_difference_in_means(s.data);
  const auto r = ace_ipw(s.data, s.true_scores, std::vector<bool>(o.n, true));
  EXPECT_LE(std::abs(r.estimate - 1.0), 3.0 * r.se);
  EXPECT_NEAR(naive.estimate - 1.0, 0.5, 0.2);
  EXPECT_FALSE(r.high_weight);
}

TEST(Ipw, ExtremeScoreFlaggedNotFatal) {
  const auto d = with_outcomes({1.0, 2.0, 0.5, 0.0}, {1, 1, 0, 0});
  const std::vector<double> e{1e-6, 0.5, 0.5, 0.5};
  const auto r = ace_ipw(d, e, {true, true, true, true});
  EXPECT_TRUE(std::isfinite(r.estimate));
  EXPECT_TRUE(r.high_weight);
}

TEST(Ipw, DegenerateScoresAreADivisionHazard) {
  const auto d = with_outcomes({1.0, 2.0}, {1, 0});
  const std::vector<double> e{1.0, 0.5};
  expect_error(ErrorKind::division_hazard, [&] { ace_ipw(d, e, {true, true}); });
}

TEST(Ipw, HorvitzThompsonUnbiasedOnSimulation) {
  ConfoundedOptions o;
  o.n = 4000;
  const auto s = simulate_confounded(o, 15);
  const auto r = ace_ipw(s.data, s.true_scores, std::vector<bool>(o.n, true), false);
  EXPECT_EQ(r.method, "ipw-ht");
  EXPECT_LE(std::abs(r.estimate - 1.0), 3.0 * r.se);
}

TEST(MarginPipeline, NullEffectWithinThreeSe) {
  ConfoundedOptions o;
  o.n = 600;
  o.effect = 0.0;
  const auto s = simulate_confounded(o, 9);
  MarginPipelineOptions mo;
  mo.kernel = KernelSpec::gaussian(2.0);
  // Y depends on z_1, which also drives treatment, so adjust inside the
  // margin with IPW.
  mo.estimator = EstimatorKind::ipw;
  const auto r = margin_ace_pipeline(s.data, mo);
  EXPECT_EQ(r.report.estimand, Estimand::ace_margin);
  EXPECT_EQ(r.report.n_subpop, r.margin.indices.size());
  EXPECT_LE(std::abs(r.report.estimate), 3.0 * r.report.se);
}

TEST(MarginPipeline, DeterministicStratumExcluded) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> nd;
  std::uniform_real_distribution<double> u;
  const int n = 400;
  ObservationalDataset d;
  d.z = Matrix(n, 2);
  d.t.resize(n);
  d.y = Vector::Zero(n);
  std::vector<bool> fixed(n);
  for (int i = 0; i < n; ++i) {
    fixed[static_cast<std::size_t>(i)] = i % 4 == 0;
    d.z(i, 0) = fixed[static_cast<std::size_t>(i)] ? 4.0 : 0.0;
    d.z(i, 1) = nd(rng);
    d.t[static_cast<std::size_t>(i)] = fixed[static_cast<std::size_t>(i)] ? 1 : (u(rng) < 0.5 ? 1 : 0);
    d.y(i) = nd(rng);
  }
  MarginPipelineOptions mo;
  mo.kernel = KernelSpec::gaussian(1.0);
  mo.lambda = 0.05;
  const auto r = margin_ace_pipeline(d, mo);
  std::size_t fixed_in = 0, mixed_in = 0;
  for (auto i : r.margin.indices) (fixed[i] ? fixed_in : mixed_in)++;
  EXPECT_LE(fixed_in, 10u);  // at most the few support vectors on the boundary
  EXPECT_GE(mixed_in, 200u);
}

TEST(Bootstrap, ConstantOutcomeHasZeroSe) {
  const auto d = with_outcomes(std::vector<double>(50, 3.0), [] {
    std::vector<int> t(50);
    for (std::size_t i = 0; i < 50; ++i) t[i] = i % 2;
    return t;
  }());
  const auto b = bootstrap_se([](const ObservationalDataset& s) { return ace_difference_in_means(s).estimate; }, d,
                              200, 1);
  EXPECT_EQ(b.se, 0.0);
}

TEST(Bootstrap, MatchesAnalyticSe) {
  std::mt19937_64 rng(20);
  std::normal_distribution<double> nd(0.0, 2.0);
  std::vector<double> y(1000);
  std::vector<int> t(1000);
  for (std::size_t i = 0; i < 1000; ++i) {
    y[i] = nd(rng);
    t[i] = i < 400 ? 1 : 0;
  }
  const auto d = with_outcomes(y, t);
  const auto est = [](const ObservationalDataset& s) { return ace_difference_in_means(s).estimate; };
  const auto b = bootstrap_se(est, d, 500, 2);
  const double analytic = oracle::dim_standard_error(4.0, 400, 600);
  EXPECT_NEAR(b.se, analytic, 0.2 * analytic);
  EXPECT_EQ(b.se, bootstrap_se(est, d, 500, 2).se);
  EXPECT_EQ(b.ok, 500u);
}

TEST(Bootstrap, FailingResamplesCountedThenUnstable) {
  // One treated unit: roughly 37% of resamples miss it.
  std::vector<int> t(30, 0);
  t[0] = 1;
  std::vector<double> y(30);
  std::iota(y.begin(), y.end(), 0.0);
  const auto d = with_outcomes(y, t);
  const auto est = [](const ObservationalDataset& s) { return ace_difference_in_means(s).estimate; };
  const auto b = bootstrap_se(est, d, 400, 3);
  EXPECT_GT(b.failed, 0u);
  EXPECT_EQ(b.ok + b.failed, 400u);

  // An estimand undefined on about three resamples in four.
  const auto flaky = [](std::span<const std::size_t> rows) {
    if (rows[0] % 4 != 0) fail(ErrorKind::empty_margin, "no unit in the margin");
    return 1.0;
  };
  expect_error(ErrorKind::unstable_estimand, [&] { bootstrap_se_indexed(flaky, 40, 200, 3); });
  expect_error(ErrorKind::invalid_config, [&] { bootstrap_se(est, d, 50, 3); });
}

TEST(Consistency, TrimmedEstimateApproachesRegionOracle) {
  auto mean_abs_error = [](std::size_t n) {
    double total = 0.0;
    for (std::uint64_t rep = 0; rep < 20; ++rep) {
      ConfoundedOptions o;
      o.n = n;
      o.randomized = true;
      o.effect = 1.0;
      const auto s = simulate_confounded(o, 1000 + rep);
      const auto region = crump_region(s.true_scores);
      total += std::abs(ace_difference_in_means(s.data, region.member).estimate - ace_oracle(s.data, region.member));
    }
    return total / 20.0;
  };
  EXPECT_LT(mean_abs_error(5000), mean_abs_error(500));
}
