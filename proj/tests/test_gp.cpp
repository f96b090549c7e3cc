#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "overlap/gp.hpp"
#include "overlap/mercer_io.hpp"
#include "test_util.hpp"

using namespace overlap;
using testutil::expect_error;

namespace {

MercerSpec euclidean_orthonormal_spec(std::size_t n_grid, Vector c, Vector a) {
  const Grid grid = Grid::unit(n_grid);
  const Vector ones = Vector::Ones(static_cast<Eigen::Index>(n_grid));
  const Matrix basis = orthonormalize(sine_basis(grid, static_cast<std::size_t>(c.size())), ones);
  return MercerSpec(grid, std::move(c), std::move(a), basis);
}

}  // namespace

TEST(Kernel, GaussianDiagonalIsOne) {
  const Grid grid({-3.0, -0.5, 0.0, 1.25, 7.0});
  const Matrix m = covariance_on_grid(KernelSpec::gaussian(0.3), grid);
  for (Eigen::Index i = 0; i < m.rows(); ++i) EXPECT_DOUBLE_EQ(m(i, i), 1.0);
}

TEST(Kernel, TwoPointGridOffDiagonal) {
  const Matrix m = covariance_on_grid(KernelSpec::gaussian(1.0), Grid({0.0, 1.0}));
  EXPECT_NEAR(m(0, 1), std::exp(-0.5), 1e-15);
  EXPECT_NEAR(m(0, 1), 0.60653, 1e-5);
  EXPECT_EQ(m(0, 1), m(1, 0));
}

TEST(Kernel, ThreePointGridIsPsd) {
  const Matrix m = covariance_on_grid(KernelSpec::gaussian(2.0), Grid({0.0, 0.1, 0.2}));
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10);
}

TEST(Kernel, EvalIsSymmetric) {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> nd(0.0, 3.0);
  for (int rep = 0; rep < 200; ++rep) {
    const double x = nd(rng), y = nd(rng);
    const KernelSpec g = KernelSpec::gaussian(0.1 + std::abs(nd(rng)));
    EXPECT_EQ(kernel_eval(g, x, y), kernel_eval(g, y, x));
    EXPECT_EQ(kernel_eval(KernelSpec::linear(), x, y), kernel_eval(KernelSpec::linear(), y, x));
    const Vector u = Vector::Random(3), v = Vector::Random(3);
    EXPECT_EQ(kernel_eval(g, u, v), kernel_eval(g, v, u));
  }
}

TEST(Kernel, RandomGridsArePsd) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> unif(0.0, 5.0);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t n = 2 + static_cast<std::size_t>(rep * 2 % 63);
    std::vector<double> pts(n);
    for (auto& p : pts) p = unif(rng);
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    const Matrix m = covariance_on_grid(KernelSpec::gaussian(0.05 + unif(rng)), Grid(pts));
    Eigen::SelfAdjointEigenSolver<Matrix> es(m);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8 * es.eigenvalues().maxCoeff());
  }
}

TEST(Kernel, NonPsdUserMatrixRejected) {
  Matrix bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;
  expect_error(ErrorKind::invalid_config, [&] { covariance_on_grid(KernelSpec::user(bad), Grid({0.0, 1.0})); });
  Matrix ok(2, 2);
  ok << 2.0, 1.0, 1.0, 2.0;
  EXPECT_TRUE(covariance_on_grid(KernelSpec::user(ok), Grid({0.0, 1.0})).isApprox(ok));
}

TEST(Kernel, BadSigmaRejected) {
  expect_error(ErrorKind::invalid_config, [] { kernel_eval(KernelSpec::gaussian(0.0), 1.0, 2.0); });
  expect_error(ErrorKind::invalid_config, [] { Grid({1.0, 1.0}); });
}

TEST(GaussianMercer, ClosedFormTerms) {
  const MercerSpec m = gaussian_kernel_mercer(1.0, 2, Grid({0.0, 0.5, 1.0}));
  EXPECT_NEAR(m.eigenvalues()(0), std::sqrt(2.0), 1e-15);
  EXPECT_NEAR(m.eigenvalues()(1), 1.0, 1e-15);
  EXPECT_EQ(m.basis()(0, 0), 0.0);
  EXPECT_EQ(m.basis()(1, 0), 0.0);
  EXPECT_NEAR(m.basis()(0, 2), std::exp(-1.0), 1e-15);
}

TEST(GaussianMercer, EigenvaluesPositiveAndDecreasingBelowOne) {
  for (double s2 : {0.1, 0.5, 0.9}) {
    const MercerSpec m = gaussian_kernel_mercer(s2, 25, Grid::unit(10));
    for (Eigen::Index j = 0; j < 25; ++j) {
      EXPECT_GT(m.eigenvalues()(j), 0.0);
      if (j > 0) {
        EXPECT_LT(m.eigenvalues()(j), m.eigenvalues()(j - 1));
      }
    }
  }
}

TEST(GaussianMercer, IncreasingEigenvaluesRejected) {
  expect_error(ErrorKind::invalid_config, [] { gaussian_kernel_mercer(4.0, 5, Grid::unit(4)); });
}

TEST(SamplePaths, ZeroSpectrumGivesTheMean) {
  Vector a(3);
  a << 1.0, -0.5, 0.25;
  const MercerSpec spec = euclidean_orthonormal_spec(8, Vector::Zero(3), a);
  const FunctionalSampleSet s = sample_paths(spec, 5, 1, GroupMean::m1);
  const Vector m = spec.mean_function();
  for (Eigen::Index r = 0; r < 5; ++r) EXPECT_TRUE(s.values.row(r).transpose().isApprox(m, 1e-14));
  EXPECT_EQ(s.count(1), 5u);
}

TEST(SamplePaths, SeedDeterminesOutput) {
  const MercerSpec spec = euclidean_orthonormal_spec(8, Vector::Constant(3, 0.5), Vector::Ones(3));
  const auto a = sample_paths(spec, 50, 42, GroupMean::m1);
  const auto b = sample_paths(spec, 50, 42, GroupMean::m1);
  const auto c = sample_paths(spec, 50, 43, GroupMean::m1);
  EXPECT_EQ(a.values, b.values);
  EXPECT_NE(a.values, c.values);
}

TEST(SamplePaths, EmpiricalCovarianceMatchesExpansion) {
  Vector c(3);
  c << 1.0, 0.25, 1.0 / 9.0;
  const MercerSpec spec = euclidean_orthonormal_spec(8, c, Vector::Zero(3));
  const auto s = sample_paths(spec, 10000, 2024, GroupMean::zero);
  const Matrix centered = s.values.rowwise() - s.values.colwise().mean();
  const Matrix cov = centered.transpose() * centered / 9999.0;
  EXPECT_LE((cov - spec.covariance()).cwiseAbs().maxCoeff(), 0.05);
}

TEST(SamplePaths, SampleMeanConvergesToMean) {
  Vector c(3), a(3);
  c << 1.0, 0.5, 0.25;
  a << 2.0, -1.0, 0.5;
  const MercerSpec spec = euclidean_orthonormal_spec(8, c, a);
  const auto s = sample_paths(spec, 10000, 99, GroupMean::m1);
  const Vector mean = s.values.colwise().mean().transpose();
  const Vector sd = spec.covariance().diagonal().cwiseSqrt();
  for (Eigen::Index i = 0; i < mean.size(); ++i)
    EXPECT_LE(std::abs(mean(i) - spec.mean_function()(i)), 3.0 * sd(i) / 100.0) << "grid point " << i;
}

TEST(SamplePaths, NoiseIsSeeded) {
  const MercerSpec spec = euclidean_orthonormal_spec(4, Vector::Ones(1), Vector::Zero(1));
  const auto s = sample_paths(spec, 3, 1, GroupMean::zero);
  EXPECT_EQ(add_observation_noise(s, 0.1, 5).values, add_observation_noise(s, 0.1, 5).values);
  EXPECT_EQ(add_observation_noise(s, 0.0, 5).values, s.values);
}

TEST(Grid, TrapezoidWeightsIntegrateLinearExactly) {
  const Grid g({0.0, 0.1, 0.4, 1.0});
  const Vector w = g.trapezoid_weights();
  EXPECT_NEAR(w.sum(), 1.0, 1e-15);
  double integral = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) integral += w(static_cast<Eigen::Index>(i)) * g[i];
  EXPECT_NEAR(integral, 0.5, 1e-15);
}

TEST(Orthonormalize, WeightedInnerProductIsIdentity) {
  const Grid g = Grid::unit(32);
  const Vector w = g.trapezoid_weights();
  const Matrix b = orthonormalize(sine_basis(g, 6), w);
  const Matrix gram = b * w.asDiagonal() * b.transpose();
  EXPECT_TRUE(gram.isApprox(Matrix::Identity(6, 6), 1e-12));
}

TEST(MercerSpecFile, RoundTripIsExact) {
  Vector c(2), a(2);
  c << 1.0, 0.1;
  a << 0.3, -0.7;
  const MercerSpec spec = euclidean_orthonormal_spec(5, c, a);
  std::stringstream buf;
  write_mercer_spec(buf, spec);
  const MercerSpec back = parse_mercer_spec(buf);
  EXPECT_EQ(back.grid(), spec.grid());
  EXPECT_EQ(back.eigenvalues(), spec.eigenvalues());
  EXPECT_EQ(back.mean_coeffs(), spec.mean_coeffs());
  EXPECT_EQ(back.basis(), spec.basis());
}

TEST(MercerSpecFile, MalformedInputIsParseError) {
  std::istringstream no_grid("terms\n1, 1, 0\n");
  expect_error(ErrorKind::parse_error, [&] { parse_mercer_spec(no_grid); });
  std::istringstream out_of_order("basis sine\ngrid\n0.5\n1\nterms\n2, 1, 0\n");
  expect_error(ErrorKind::parse_error, [&] { parse_mercer_spec(out_of_order); });
  std::istringstream increasing("basis sine\ngrid\n0.5\n1\nterms\n1, 0.5, 0\n2, 1, 0\n");
  expect_error(ErrorKind::invalid_config, [&] { parse_mercer_spec(increasing); });
}
