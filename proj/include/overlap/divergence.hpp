#pragma once

// Divergences between Gaussian measures and the equivalence/orthogonality
// verdict, plus the strict-overlap <=> bounded-likelihood-ratio check on
// finite supports.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "overlap/error.hpp"
#include "overlap/gp.hpp"

namespace overlap {

struct GaussianMeasurePair {
  Vector mean0, mean1;
  Matrix cov0, cov1;

  Eigen::Index dim() const noexcept { return mean0.size(); }

  void validate() const {
    const auto n = mean0.size();
    require(n >= 1, ErrorKind::invalid_config, "gaussian pair needs dimension >= 1");
    require(mean1.size() == n && cov0.rows() == n && cov0.cols() == n && cov1.rows() == n && cov1.cols() == n,
            ErrorKind::invalid_config, "gaussian pair dimensions disagree");
    require(mean0.allFinite() && mean1.allFinite(), ErrorKind::invalid_config, "means must be finite");
    require_psd(cov0, "cov0");
    require_psd(cov1, "cov1");
  }

  GaussianMeasurePair swapped() const { return {mean1, mean0, cov1, cov0}; }
};

struct DivergenceResult {
  double L = 0.0;                 // 2 log|avg cov| - log|cov0| - log|cov1|
  double D2 = 0.0;                // Mahalanobis distance under the averaged covariance
  double bhat_distance = 0.0;     // L/4 + D2/8
  double bhat_coefficient = 1.0;  // exp(-bhat_distance)
  std::optional<double> J;        // KL(0||1) + KL(1||0), when computed
};

namespace detail {

// Eigenvalues at or below this fraction of the largest are treated as zero.
inline constexpr double kSingularTolerance = 1e-12;

struct SpdFactor {
  Eigen::SelfAdjointEigenSolver<Matrix> eig;
  bool singular = false;
  double log_det = 0.0;

  explicit SpdFactor(const Matrix& m) : eig(m) {
    const Vector& ev = eig.eigenvalues();
    const double top = ev.maxCoeff();
    singular = !(top > 0.0) || ev.minCoeff() <= kSingularTolerance * top;
    if (!singular) log_det = ev.array().log().sum();
  }

  // x' M^{-1} x
  double inverse_quadratic(const Vector& x) const {
    const Vector proj = eig.eigenvectors().transpose() * x;
    return (proj.array().square() / eig.eigenvalues().array()).sum();
  }

  // tr(M^{-1} other)
  double inverse_trace(const Matrix& other) const {
    const Matrix& v = eig.eigenvectors();
    const Matrix rotated = v.transpose() * other * v;
    return (rotated.diagonal().array() / eig.eigenvalues().array()).sum();
  }
};

}  // namespace detail

// Closed-form Bhattacharyya distance and coefficient. A singular averaged
// covariance is reported as an error; a singular group covariance with an
// invertible average makes L infinite (coefficient 0).
inline DivergenceResult gaussian_bhattacharyya(const GaussianMeasurePair& pair) {
  pair.validate();
  const Matrix avg = 0.5 * (pair.cov0 + pair.cov1);
  const detail::SpdFactor avg_f(avg);
  require(!avg_f.singular, ErrorKind::singular_covariance,
          "averaged covariance is singular; the measures are orthogonality suspects");
  const Vector delta = pair.mean1 - pair.mean0;

  DivergenceResult r;
  r.D2 = std::max(0.0, avg_f.inverse_quadratic(delta));
  const detail::SpdFactor f0(pair.cov0), f1(pair.cov1);
  if (f0.singular || f1.singular) {
    r.L = std::numeric_limits<double>::infinity();
  } else {
    r.L = std::max(0.0, 2.0 * avg_f.log_det - f0.log_det - f1.log_det);
  }
  r.bhat_distance = r.L / 4.0 + r.D2 / 8.0;
  r.bhat_coefficient = std::exp(-r.bhat_distance);
  return r;
}

// Symmetrized relative entropy KL(mu0||mu1) + KL(mu1||mu0).
inline double gaussian_relative_entropy(const GaussianMeasurePair& pair) {
  pair.validate();
  const detail::SpdFactor f0(pair.cov0), f1(pair.cov1);
  require(!f0.singular && !f1.singular, ErrorKind::singular_covariance,
          "relative entropy needs invertible covariances");
  const Vector delta = pair.mean1 - pair.mean0;
  const double d = static_cast<double>(pair.dim());
  const double traces = f1.inverse_trace(pair.cov0) + f0.inverse_trace(pair.cov1) - 2.0 * d;
  const double mahal = f0.inverse_quadratic(delta) + f1.inverse_quadratic(delta);
  return std::max(0.0, 0.5 * (traces + mahal));
}

// Bhattacharyya terms plus J; J is +inf when either covariance is singular.
inline DivergenceResult divergence_report(const GaussianMeasurePair& pair) {
  DivergenceResult r = gaussian_bhattacharyya(pair);
  const detail::SpdFactor f0(pair.cov0), f1(pair.cov1);
  r.J = (f0.singular || f1.singular) ? std::numeric_limits<double>::infinity() : gaussian_relative_entropy(pair);
  return r;
}

enum class MeasureVerdict { equivalent, orthogonal };

inline std::string to_string(MeasureVerdict v) {
  return v == MeasureVerdict::equivalent ? "equivalent" : "orthogonal";
}

struct DichotomyThresholds {
  double eps_b = 1e-8;  // coefficient at or below this reads as B = 0
  double cap_j = 1e6;   // J at or above this reads as J = infinity
};

inline MeasureVerdict dichotomy_verdict(const DivergenceResult& r, DichotomyThresholds th = {}) {
  require(th.eps_b > 0.0 && th.cap_j > 0.0, ErrorKind::invalid_config, "dichotomy thresholds must be positive");
  if (r.bhat_coefficient <= th.eps_b || (r.J && *r.J >= th.cap_j)) return MeasureVerdict::orthogonal;
  return MeasureVerdict::equivalent;
}

struct LikelihoodRatioBounds {
  double lower = 0.0;
  double upper = 0.0;
};

// Bounds on LR(z) = f1/f0 equivalent to eta <= e(z) <= 1 - eta when the
// treated fraction is alpha.
inline LikelihoodRatioBounds lr_bounds(double eta, double alpha) {
  require(eta > 0.0 && eta < 0.5, ErrorKind::invalid_config, "eta must lie strictly inside (0, 0.5)");
  require(alpha > 0.0 && alpha < 1.0, ErrorKind::invalid_config, "alpha must lie strictly inside (0, 1)");
  const double odds_alpha = (1.0 - alpha) / alpha;
  return {eta / (1.0 - eta) * odds_alpha, (1.0 - eta) / eta * odds_alpha};
}

// Finite covariate support with marginal P_Z and propensity e per point.
struct DiscreteDistributionPair {
  std::vector<double> pz;
  std::vector<double> e;
  double alpha = 0.5;  // P(T = 1) = sum_z pz(z) e(z)

  static DiscreteDistributionPair from(std::vector<double> pz, std::vector<double> e) {
    DiscreteDistributionPair d{std::move(pz), std::move(e), 0.0};
    for (std::size_t i = 0; i < d.pz.size() && i < d.e.size(); ++i) d.alpha += d.pz[i] * d.e[i];
    d.validate();
    return d;
  }

  void validate() const {
    require(!pz.empty() && pz.size() == e.size(), ErrorKind::invalid_config,
            "support, pz and e must have equal nonzero length");
    double total = 0.0, treated = 0.0;
    for (std::size_t i = 0; i < pz.size(); ++i) {
      require(pz[i] >= 0.0 && e[i] >= 0.0 && e[i] <= 1.0, ErrorKind::invalid_config,
              "pz must be nonnegative and e must lie in [0, 1]");
      total += pz[i];
      treated += pz[i] * e[i];
    }
    require(std::abs(total - 1.0) <= 1e-12, ErrorKind::invalid_config, "pz must sum to 1");
    require(alpha > 0.0 && alpha < 1.0, ErrorKind::invalid_config, "alpha must lie strictly inside (0, 1)");
    require(std::abs(treated - alpha) <= 1e-12, ErrorKind::invalid_config,
            "alpha disagrees with sum pz * e; f0 and f1 would not be densities");
  }

  // Densities against P_Z by Bayes rule.
  double f1(std::size_t i) const { return e[i] / alpha; }
  double f0(std::size_t i) const { return (1.0 - e[i]) / (1.0 - alpha); }
};

enum class OverlapAgreement { both_hold, both_fail, disagreement };

inline std::string to_string(OverlapAgreement a) {
  switch (a) {
    case OverlapAgreement::both_hold: return "both-hold";
    case OverlapAgreement::both_fail: return "both-fail";
    case OverlapAgreement::disagreement: return "disagreement";
  }
  return "unknown";
}

struct OverlapCheck {
  bool strict_overlap = false;  // eta <= e <= 1 - eta on the support
  bool lr_bounded = false;      // likelihood-ratio bounds on the support
  OverlapAgreement outcome() const {
    if (strict_overlap && lr_bounded) return OverlapAgreement::both_hold;
    if (!strict_overlap && !lr_bounded) return OverlapAgreement::both_fail;
    return OverlapAgreement::disagreement;
  }
};

namespace detail {
// a <= b up to a relative round-off allowance; both routes share it.
inline bool leq(double a, double b) { return a <= b + 1e-12 * std::max(1.0, std::abs(b)); }
}  // namespace detail

// Evaluates both criteria independently: the propensity bounds pointwise and
// the likelihood-ratio bounds through f1/f0. Points with pz = 0 are ignored.
inline OverlapCheck check_overlap_lr_equivalence(const DiscreteDistributionPair& d, double eta) {
  d.validate();
  const LikelihoodRatioBounds bounds = lr_bounds(eta, d.alpha);
  const double odds_alpha = d.alpha / (1.0 - d.alpha);
  OverlapCheck check{true, true};
  for (std::size_t i = 0; i < d.pz.size(); ++i) {
    if (d.pz[i] == 0.0) continue;
    if (!(detail::leq(eta, d.e[i]) && detail::leq(d.e[i], 1.0 - eta))) check.strict_overlap = false;

    const double f0 = d.f0(i), f1 = d.f1(i);
    const double lr = f0 > 0.0 ? f1 / f0 : std::numeric_limits<double>::infinity();
    // Compare in the scaled form alpha/(1-alpha) * LR against eta/(1-eta).
    const double scaled = odds_alpha * lr;
    const double lo = odds_alpha * bounds.lower, hi = odds_alpha * bounds.upper;
    if (!(std::isfinite(scaled) && detail::leq(lo, scaled) && detail::leq(scaled, hi))) check.lr_bounded = false;
  }
  return check;
}

struct MonteCarloEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
};

// Importance-sampling estimate of the Bhattacharyya coefficient with draws
// from the mixture (mu0 + mu1)/2; each draw contributes
// sqrt(p0 p1) / ((p0 + p1)/2) = sech((log p0 - log p1)/2).
inline MonteCarloEstimate monte_carlo_bhattacharyya(const GaussianMeasurePair& pair, std::size_t n_draws,
                                                    std::uint64_t seed) {
  pair.validate();
  require(pair.dim() <= 4, ErrorKind::invalid_config, "monte carlo oracle supports dimension <= 4");
  require(n_draws >= 100000, ErrorKind::invalid_config, "monte carlo oracle needs at least 1e5 draws");
  const Eigen::LLT<Matrix> c0(pair.cov0), c1(pair.cov1);
  require(c0.info() == Eigen::Success && c1.info() == Eigen::Success, ErrorKind::singular_covariance,
          "monte carlo oracle needs positive definite covariances");
  const Matrix l0 = c0.matrixL(), l1 = c1.matrixL();
  const double half_logdet0 = l0.diagonal().array().log().sum();
  const double half_logdet1 = l1.diagonal().array().log().sum();
  auto log_density_gap = [&](const Vector& x) {
    const Vector r0 = c0.matrixL().solve(x - pair.mean0);
    const Vector r1 = c1.matrixL().solve(x - pair.mean1);
    // log p0 - log p1; the 2*pi terms cancel.
    return -0.5 * r0.squaredNorm() - half_logdet0 + 0.5 * r1.squaredNorm() + half_logdet1;
  };

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  const auto d = pair.dim();
  Vector z(d), x(d);
  double mean = 0.0, m2 = 0.0;
  for (std::size_t k = 0; k < n_draws; ++k) {
    for (Eigen::Index i = 0; i < d; ++i) z(i) = normal(rng);
    x = coin(rng) ? Vector(pair.mean1 + l1 * z) : Vector(pair.mean0 + l0 * z);
    const double w = 1.0 / std::cosh(0.5 * log_density_gap(x));
    const double delta = w - mean;
    mean += delta / static_cast<double>(k + 1);
    m2 += delta * (w - mean);
  }
  const double var = m2 / static_cast<double>(n_draws - 1);
  return {mean, std::sqrt(var / static_cast<double>(n_draws))};
}

}  // namespace overlap
