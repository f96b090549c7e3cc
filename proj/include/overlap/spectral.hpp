#pragma once

// Empirical Mercer spectrum of functional samples and the phase-transition
// statistic sum_j a_j^2 / c_j.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "overlap/error.hpp"
#include "overlap/gp.hpp"

namespace overlap {

struct SpectralEstimate {
  Vector eigenvalues;          // floored at `floor`, nonincreasing
  Vector raw_eigenvalues;      // before flooring (negatives clipped to 0)
  Matrix eigenvectors;         // n_grid x J, orthonormal under the quadrature weights
  Vector mean_coeffs;          // empty until project_mean_difference
  Vector quadrature_weights;
  double floor = 0.0;
  double sampling_variance = 0.0;  // 1/n0 + 1/n1, set by project_mean_difference
};

struct SpectralOptions {
  double ridge = 0.0;             // absolute eigenvalue floor
  double relative_ridge = 1e-10;  // floor relative to the leading eigenvalue
};

// Top-J eigenpairs of the pooled within-group covariance operator under
// trapezoid quadrature: C W phi = c phi with phi' W phi = 1.
inline SpectralEstimate empirical_eigendecomposition(const FunctionalSampleSet& samples, std::size_t J,
                                                     SpectralOptions options = {}) {
  samples.validate();
  const auto n_grid = static_cast<Eigen::Index>(samples.grid.size());
  require(J >= 1, ErrorKind::invalid_config, "need at least one eigenpair");
  require(static_cast<Eigen::Index>(J) <= n_grid, ErrorKind::invalid_config,
          "J = " + std::to_string(J) + " exceeds the grid size " + std::to_string(n_grid));
  require(samples.samples() >= J, ErrorKind::invalid_config, "pooled sample size is smaller than J");
  require(options.ridge >= 0.0 && options.relative_ridge >= 0.0, ErrorKind::invalid_config,
          "ridge must be nonnegative");

  Matrix centered = samples.values;
  std::size_t groups_present = 0;
  for (int g : {0, 1}) {
    const std::size_t count = samples.count(g);
    if (count == 0) continue;
    ++groups_present;
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(n_grid);
    for (Eigen::Index r = 0; r < centered.rows(); ++r)
      if (samples.group[static_cast<std::size_t>(r)] == g) mean += centered.row(r);
    mean /= static_cast<double>(count);
    for (Eigen::Index r = 0; r < centered.rows(); ++r)
      if (samples.group[static_cast<std::size_t>(r)] == g) centered.row(r) -= mean;
  }
  const double dof = std::max(1.0, static_cast<double>(samples.samples() - groups_present));
  const Matrix cov = (centered.transpose() * centered) / dof;

  const Vector w = samples.grid.trapezoid_weights();
  const Vector sqrt_w = w.cwiseSqrt();
  const Matrix sym = sqrt_w.asDiagonal() * cov * sqrt_w.asDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);

  SpectralEstimate out;
  out.quadrature_weights = w;
  out.raw_eigenvalues.resize(static_cast<Eigen::Index>(J));
  out.eigenvectors.resize(n_grid, static_cast<Eigen::Index>(J));
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(J); ++j) {
    const Eigen::Index src = n_grid - 1 - j;  // ascending order from the solver
    out.raw_eigenvalues(j) = std::max(0.0, es.eigenvalues()(src));
    Vector phi = es.eigenvectors().col(src).cwiseQuotient(sqrt_w);
    // Sign convention: the largest-magnitude entry is positive.
    Eigen::Index arg = 0;
    phi.cwiseAbs().maxCoeff(&arg);
    if (phi(arg) < 0.0) phi = -phi;
    out.eigenvectors.col(j) = phi;
  }
  out.floor = std::max(options.ridge, options.relative_ridge * out.raw_eigenvalues(0));
  if (out.floor <= 0.0) out.floor = std::numeric_limits<double>::min();
  out.eigenvalues = out.raw_eigenvalues.cwiseMax(out.floor);
  return out;
}

// a_j = <mean_1 - mean_0, phi_j> under the quadrature weights.
inline SpectralEstimate project_mean_difference(const FunctionalSampleSet& samples, SpectralEstimate spectral) {
  samples.validate();
  const std::size_t n1 = samples.count(1), n0 = samples.count(0);
  require(n0 > 0 && n1 > 0, ErrorKind::missing_group, "both groups need at least one sample");
  require(spectral.eigenvectors.rows() == samples.values.cols(), ErrorKind::invalid_config,
          "spectral estimate lives on a different grid");
  Vector diff = Vector::Zero(samples.values.cols());
  for (Eigen::Index r = 0; r < samples.values.rows(); ++r) {
    const bool treated = samples.group[static_cast<std::size_t>(r)] == 1;
    diff += samples.values.row(r).transpose() * (treated ? 1.0 / static_cast<double>(n1) : -1.0 / static_cast<double>(n0));
  }
  spectral.mean_coeffs = spectral.eigenvectors.transpose() * diff.cwiseProduct(spectral.quadrature_weights);
  spectral.sampling_variance = 1.0 / static_cast<double>(n0) + 1.0 / static_cast<double>(n1);
  return spectral;
}

enum class OverlapVerdict { equivalent_overlap_plausible, orthogonal_overlap_violated, inconclusive };

inline std::string to_string(OverlapVerdict v) {
  switch (v) {
    case OverlapVerdict::equivalent_overlap_plausible: return "equivalent-overlap-plausible";
    case OverlapVerdict::orthogonal_overlap_violated: return "orthogonal-overlap-violated";
    case OverlapVerdict::inconclusive: return "inconclusive";
  }
  return "unknown";
}

struct PhaseTransitionReport {
  std::vector<double> partial_sums;  // S_1..S_J
  double growth_ratio = 1.0;         // S_J / S_ceil(J/2)
  // Expected S_J when the true mean difference is zero: each estimated
  // a_j^2 / c_j carries sampling noise of about 1/n0 + 1/n1. Zero for exact
  // (c, a) inputs.
  double noise_floor = 0.0;
  OverlapVerdict verdict = OverlapVerdict::inconclusive;

  double total() const { return partial_sums.empty() ? 0.0 : partial_sums.back(); }
};

inline PhaseTransitionReport phase_transition_statistic(const std::vector<double>& c, const std::vector<double>& a) {
  require(c.size() == a.size(), ErrorKind::invalid_config, "eigenvalue and coefficient counts differ");
  require(!c.empty(), ErrorKind::invalid_config, "need at least one term");
  PhaseTransitionReport report;
  report.partial_sums.reserve(c.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < c.size(); ++j) {
    require(c[j] > 0.0, ErrorKind::invalid_config, "eigenvalues must be positive after flooring");
    sum += a[j] * a[j] / c[j];
    report.partial_sums.push_back(sum);
  }
  const std::size_t half = (c.size() + 1) / 2;  // ceil(J/2), 1-based
  const double head = report.partial_sums[half - 1];
  if (head > 0.0) {
    report.growth_ratio = sum / head;
  } else {
    report.growth_ratio = sum > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
  }
  return report;
}

inline PhaseTransitionReport phase_transition_statistic(const SpectralEstimate& s) {
  require(s.mean_coeffs.size() == s.eigenvalues.size(), ErrorKind::invalid_config,
          "spectral estimate has no projected mean coefficients");
  PhaseTransitionReport r = phase_transition_statistic(
      std::vector<double>(s.eigenvalues.data(), s.eigenvalues.data() + s.eigenvalues.size()),
      std::vector<double>(s.mean_coeffs.data(), s.mean_coeffs.data() + s.mean_coeffs.size()));
  r.noise_floor = static_cast<double>(s.eigenvalues.size()) * s.sampling_variance;
  return r;
}

struct VerdictThresholds {
  double growth_threshold = 2.0;  // at or above: series treated as divergent
  double plausible_ratio = 1.1;   // at or below: series treated as convergent
  double noise_multiple = 3.0;    // S_J within this multiple of the noise floor: no detectable mean difference
};

// Finite truncations of a divergent series are finite, so only growth of
// the partial sums is judged.
inline OverlapVerdict overlap_verdict(const PhaseTransitionReport& report, VerdictThresholds th = {}) {
  if (report.noise_floor > 0.0 && report.total() <= th.noise_multiple * report.noise_floor)
    return OverlapVerdict::equivalent_overlap_plausible;
  if (report.growth_ratio >= th.growth_threshold) return OverlapVerdict::orthogonal_overlap_violated;
  if (report.growth_ratio <= th.plausible_ratio && std::isfinite(report.total()))
    return OverlapVerdict::equivalent_overlap_plausible;
  return OverlapVerdict::inconclusive;
}

}  // namespace overlap
