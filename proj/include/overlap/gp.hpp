#pragma once

// Covariance kernels, Mercer expansions and seeded Gaussian-process paths on
// finite grids.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "overlap/error.hpp"

namespace overlap {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Relative tolerance below which negative eigenvalues count as round-off.
inline constexpr double kPsdTolerance = 1e-8;

class Grid {
 public:
  Grid() = default;

  explicit Grid(std::vector<double> points) : points_(std::move(points)) {
    require(!points_.empty(), ErrorKind::invalid_config, "grid must be nonempty");
    for (std::size_t i = 0; i < points_.size(); ++i) {
      require(std::isfinite(points_[i]), ErrorKind::invalid_config, "grid point is not finite");
      if (i > 0)
        require(points_[i] > points_[i - 1], ErrorKind::invalid_config,
                "grid points must be strictly increasing");
    }
  }

  // {k / n : k = 1..n}. Grids built this way nest when n divides n'.
  static Grid unit(std::size_t n) {
    require(n >= 1, ErrorKind::invalid_config, "grid size must be positive");
    std::vector<double> pts(n);
    for (std::size_t k = 0; k < n; ++k) pts[k] = static_cast<double>(k + 1) / static_cast<double>(n);
    return Grid(std::move(pts));
  }

  std::size_t size() const noexcept { return points_.size(); }
  double operator[](std::size_t i) const { return points_[i]; }
  const std::vector<double>& points() const noexcept { return points_; }

  // Trapezoid-rule weights over [t_1, t_n]; a single point gets weight 1.
  Vector trapezoid_weights() const {
    const std::size_t n = size();
    Vector w = Vector::Zero(static_cast<Eigen::Index>(n));
    if (n == 1) {
      w(0) = 1.0;
      return w;
    }
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double half = 0.5 * (points_[i + 1] - points_[i]);
      w(static_cast<Eigen::Index>(i)) += half;
      w(static_cast<Eigen::Index>(i + 1)) += half;
    }
    return w;
  }

  Grid subset(const std::vector<std::size_t>& indices) const {
    std::vector<double> pts;
    pts.reserve(indices.size());
    for (auto i : indices) pts.push_back(points_.at(i));
    return Grid(std::move(pts));
  }

  bool operator==(const Grid&) const = default;

 private:
  std::vector<double> points_;
};

enum class KernelKind { gaussian, linear, user_matrix };

inline std::string to_string(KernelKind kind) {
  switch (kind) {
    case KernelKind::gaussian: return "gaussian";
    case KernelKind::linear: return "linear";
    case KernelKind::user_matrix: return "user-matrix";
  }
  return "unknown";
}

struct KernelSpec {
  KernelKind kind = KernelKind::gaussian;
  double sigma2 = 1.0;
  Matrix matrix;  // user_matrix only

  static KernelSpec gaussian(double sigma2) { return {KernelKind::gaussian, sigma2, {}}; }
  static KernelSpec linear() { return {KernelKind::linear, 1.0, {}}; }
  static KernelSpec user(Matrix m) { return {KernelKind::user_matrix, 1.0, std::move(m)}; }

  void validate() const;
};

// Symmetric eigenvalue check shared by every PSD gate in the library.
inline void require_psd(const Matrix& m, const std::string& what) {
  require(m.rows() == m.cols(), ErrorKind::invalid_config, what + " must be square");
  if (m.size() == 0) return;
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  require(((m - m.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale), ErrorKind::invalid_config,
          what + " must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  const double top = es.eigenvalues().maxCoeff();
  const double bottom = es.eigenvalues().minCoeff();
  require(bottom >= -kPsdTolerance * std::max(top, 0.0), ErrorKind::invalid_config,
          what + " is not positive semidefinite");
}

inline void KernelSpec::validate() const {
  switch (kind) {
    case KernelKind::gaussian:
      require(std::isfinite(sigma2) && sigma2 > 0.0, ErrorKind::invalid_config,
              "gaussian kernel needs sigma2 > 0");
      break;
    case KernelKind::linear:
      break;
    case KernelKind::user_matrix:
      require(matrix.size() > 0, ErrorKind::invalid_config, "user kernel matrix is empty");
      require_psd(matrix, "user kernel matrix");
      break;
  }
}

inline double kernel_eval(const KernelSpec& spec, double x, double y) {
  switch (spec.kind) {
    case KernelKind::gaussian:
      require(std::isfinite(spec.sigma2) && spec.sigma2 > 0.0, ErrorKind::invalid_config,
              "gaussian kernel needs sigma2 > 0");
      return std::exp(-(x - y) * (x - y) / (2.0 * spec.sigma2));
    case KernelKind::linear:
      return x * y;
    case KernelKind::user_matrix:
      break;
  }
  fail(ErrorKind::invalid_config, "user-matrix kernels have no pointwise form");
}

template <typename A, typename B>
double kernel_eval(const KernelSpec& spec, const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y) {
  switch (spec.kind) {
    case KernelKind::gaussian:
      require(std::isfinite(spec.sigma2) && spec.sigma2 > 0.0, ErrorKind::invalid_config,
              "gaussian kernel needs sigma2 > 0");
      return std::exp(-(x - y).squaredNorm() / (2.0 * spec.sigma2));
    case KernelKind::linear:
      return x.dot(y);
    case KernelKind::user_matrix:
      break;
  }
  fail(ErrorKind::invalid_config, "user-matrix kernels have no pointwise form");
}

// Clips eigenvalues in (-tol*max, 0) to zero; larger negatives are an error.
inline Matrix clip_to_psd(const Matrix& m, const std::string& what) {
  require_psd(m, what);
  Eigen::SelfAdjointEigenSolver<Matrix> es(m);
  if (es.eigenvalues().minCoeff() >= 0.0) return m;
  const Vector clipped = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * clipped.asDiagonal() * es.eigenvectors().transpose();
}

inline Matrix covariance_on_grid(const KernelSpec& spec, const Grid& grid) {
  spec.validate();
  const auto n = static_cast<Eigen::Index>(grid.size());
  if (spec.kind == KernelKind::user_matrix) {
    require(spec.matrix.rows() == n, ErrorKind::invalid_config,
            "user kernel matrix size does not match the grid");
    return clip_to_psd(spec.matrix, "user kernel matrix");
  }
  Matrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j <= i; ++j)
      m(i, j) = m(j, i) = kernel_eval(spec, grid[static_cast<std::size_t>(i)], grid[static_cast<std::size_t>(j)]);
  return clip_to_psd(m, "kernel covariance");
}

// Truncated Mercer expansion k(s,t) = sum_j c_j psi_j(s) psi_j(t) with mean
// m_1 = sum_j a_j psi_j; the control-group mean is zero.
class MercerSpec {
 public:
  MercerSpec() = default;

  MercerSpec(Grid grid, Vector eigenvalues, Vector mean_coeffs, Matrix basis)
      : grid_(std::move(grid)),
        eigenvalues_(std::move(eigenvalues)),
        mean_coeffs_(std::move(mean_coeffs)),
        basis_(std::move(basis)) {
    validate();
  }

  const Grid& grid() const noexcept { return grid_; }
  const Vector& eigenvalues() const noexcept { return eigenvalues_; }
  const Vector& mean_coeffs() const noexcept { return mean_coeffs_; }
  // J x n: row j holds psi_j on the grid.
  const Matrix& basis() const noexcept { return basis_; }
  std::size_t terms() const noexcept { return static_cast<std::size_t>(eigenvalues_.size()); }

  Vector mean_function() const { return basis_.transpose() * mean_coeffs_; }

  Matrix covariance() const {
    return basis_.transpose() * eigenvalues_.asDiagonal() * basis_;
  }

  void validate() const {
    require(eigenvalues_.size() >= 1, ErrorKind::invalid_config, "mercer spec needs at least one term");
    require(mean_coeffs_.size() == eigenvalues_.size(), ErrorKind::invalid_config,
            "eigenvalue and mean-coefficient counts differ");
    require(basis_.rows() == eigenvalues_.size(), ErrorKind::invalid_config,
            "basis row count differs from the term count");
    require(basis_.cols() == static_cast<Eigen::Index>(grid_.size()), ErrorKind::invalid_config,
            "basis column count differs from the grid size");
    for (Eigen::Index j = 0; j < eigenvalues_.size(); ++j) {
      require(std::isfinite(eigenvalues_(j)) && eigenvalues_(j) >= 0.0, ErrorKind::invalid_config,
              "eigenvalues must be finite and nonnegative");
      require(std::isfinite(mean_coeffs_(j)), ErrorKind::invalid_config, "mean coefficient is not finite");
      if (j > 0)
        require(eigenvalues_(j) <= eigenvalues_(j - 1), ErrorKind::invalid_config,
                "eigenvalues must be nonincreasing");
    }
    require(basis_.allFinite(), ErrorKind::invalid_config, "basis has non-finite entries");
  }

 private:
  Grid grid_;
  Vector eigenvalues_;
  Vector mean_coeffs_;
  Matrix basis_;
};

// The closed-form Gaussian-kernel expansion c_n = sqrt(2 sigma^(2n) / n),
// psi_n(x) = x^n exp(-sigma^2 x^2), taken as written (psi_n are not
// orthonormal). Mean coefficients are zero.
inline MercerSpec gaussian_kernel_mercer(double sigma2, std::size_t terms, const Grid& grid) {
  require(terms >= 1, ErrorKind::invalid_config, "need at least one Mercer term");
  require(std::isfinite(sigma2) && sigma2 > 0.0, ErrorKind::invalid_config, "sigma2 must be positive");
  const auto J = static_cast<Eigen::Index>(terms);
  const auto n = static_cast<Eigen::Index>(grid.size());
  Vector c(J);
  Matrix psi(J, n);
  for (Eigen::Index j = 0; j < J; ++j) {
    const double order = static_cast<double>(j + 1);
    c(j) = std::sqrt(2.0 * std::pow(sigma2, order) / order);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double x = grid[static_cast<std::size_t>(i)];
      psi(j, i) = std::pow(x, order) * std::exp(-sigma2 * x * x);
    }
  }
  // c_{n+1}/c_n = sqrt(sigma2 * n/(n+1)); beyond sigma2 = J/(J-1) the list
  // stops being nonincreasing and cannot form a valid spec.
  return MercerSpec(grid, std::move(c), Vector::Zero(J), std::move(psi));
}

// sqrt(2) sin((j - 1/2) pi t), the Karhunen-Loeve basis of Brownian motion on
// [0, 1]; orthonormal in L2[0, 1].
inline Matrix sine_basis(const Grid& grid, std::size_t terms) {
  const auto J = static_cast<Eigen::Index>(terms);
  const auto n = static_cast<Eigen::Index>(grid.size());
  Matrix psi(J, n);
  for (Eigen::Index j = 0; j < J; ++j)
    for (Eigen::Index i = 0; i < n; ++i)
      psi(j, i) = std::numbers::sqrt2 *
                  std::sin((static_cast<double>(j) + 0.5) * std::numbers::pi * grid[static_cast<std::size_t>(i)]);
  return psi;
}

// Gram-Schmidt on the rows of `basis` under <f, g> = sum_i w_i f_i g_i.
inline Matrix orthonormalize(const Matrix& basis, const Vector& weights) {
  require(weights.size() == basis.cols(), ErrorKind::invalid_config, "weight count differs from grid size");
  require(basis.rows() <= basis.cols(), ErrorKind::invalid_config,
          "cannot orthonormalize more functions than grid points");
  Matrix out = basis;
  for (Eigen::Index j = 0; j < out.rows(); ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index k = 0; k < j; ++k) {
        const double proj = (out.row(j).array() * out.row(k).array() * weights.transpose().array()).sum();
        out.row(j) -= proj * out.row(k);
      }
    }
    const double norm2 = (out.row(j).array().square() * weights.transpose().array()).sum();
    require(norm2 > 1e-24, ErrorKind::invalid_config, "basis functions are linearly dependent on the grid");
    out.row(j) /= std::sqrt(norm2);
  }
  return out;
}

struct FunctionalSampleSet {
  Grid grid;
  Matrix values;           // n_samples x n_grid
  std::vector<int> group;  // 0 or 1 per sample

  std::size_t samples() const noexcept { return group.size(); }

  void validate() const {
    require(values.rows() == static_cast<Eigen::Index>(group.size()), ErrorKind::invalid_config,
            "sample rows differ from group-label count");
    require(values.cols() == static_cast<Eigen::Index>(grid.size()), ErrorKind::invalid_config,
            "sample columns differ from grid size");
    require(values.allFinite(), ErrorKind::invalid_config, "samples contain non-finite values");
    for (int g : group)
      require(g == 0 || g == 1, ErrorKind::invalid_config, "group labels must be 0 or 1");
  }

  std::size_t count(int label) const {
    std::size_t c = 0;
    for (int g : group) c += (g == label);
    return c;
  }

  // Same paths observed on a sub-grid (column subset).
  FunctionalSampleSet restrict_to(const std::vector<std::size_t>& columns) const {
    FunctionalSampleSet out{grid.subset(columns), Matrix(values.rows(), static_cast<Eigen::Index>(columns.size())),
                            group};
    for (std::size_t c = 0; c < columns.size(); ++c)
      out.values.col(static_cast<Eigen::Index>(c)) = values.col(static_cast<Eigen::Index>(columns[c]));
    return out;
  }
};

inline FunctionalSampleSet concat(const FunctionalSampleSet& a, const FunctionalSampleSet& b) {
  require(a.grid == b.grid, ErrorKind::invalid_config, "sample sets live on different grids");
  FunctionalSampleSet out{a.grid, Matrix(a.values.rows() + b.values.rows(), a.values.cols()), a.group};
  out.values << a.values, b.values;
  out.group.insert(out.group.end(), b.group.begin(), b.group.end());
  return out;
}

enum class GroupMean { zero, m1 };

// Z(t) = m(t) + sum_j sqrt(c_j) xi_j psi_j(t), xi_j iid N(0, 1). Group label
// is 0 for the zero-mean law and 1 for the m_1 law.
inline FunctionalSampleSet sample_paths(const MercerSpec& mercer, std::size_t n_samples, std::uint64_t seed,
                                        GroupMean group_mean) {
  mercer.validate();
  require(n_samples >= 1, ErrorKind::invalid_config, "need at least one sample path");
  const auto J = static_cast<Eigen::Index>(mercer.terms());
  const auto rows = static_cast<Eigen::Index>(n_samples);
  const Vector scale = mercer.eigenvalues().cwiseSqrt();
  const Matrix loadings = scale.asDiagonal() * mercer.basis();  // J x n

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix xi(rows, J);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index j = 0; j < J; ++j) xi(r, j) = normal(rng);

  FunctionalSampleSet out{mercer.grid(), xi * loadings,
                          std::vector<int>(n_samples, group_mean == GroupMean::m1 ? 1 : 0)};
  if (group_mean == GroupMean::m1) out.values.rowwise() += mercer.mean_function().transpose();
  return out;
}

// Adds iid N(0, sd^2) measurement error at every grid point.
inline FunctionalSampleSet add_observation_noise(FunctionalSampleSet samples, double sd, std::uint64_t seed) {
  require(std::isfinite(sd) && sd >= 0.0, ErrorKind::invalid_config, "noise sd must be nonnegative");
  if (sd == 0.0) return samples;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sd);
  for (Eigen::Index r = 0; r < samples.values.rows(); ++r)
    for (Eigen::Index c = 0; c < samples.values.cols(); ++c) samples.values(r, c) += normal(rng);
  return samples;
}

}  // namespace overlap
