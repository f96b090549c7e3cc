#pragma once

// Propensity models: logistic regression by IRLS, the shared fit record used
// by the kernel SVM, and the variance-minimizing trimming region.

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "overlap/dataset.hpp"
#include "overlap/error.hpp"
#include "overlap/gp.hpp"

namespace overlap {

enum class ModelKind { logistic, svm };

inline std::string to_string(ModelKind k) { return k == ModelKind::logistic ? "logistic" : "svm"; }

struct PropensityFit {
  ModelKind kind = ModelKind::logistic;

  // logistic
  Vector coefficients;  // intercept first, then one per covariate
  std::vector<double> scores;
  std::vector<double> log_likelihood_trace;
  int iterations = 0;

  // svm
  std::vector<double> decision_values;
  Vector dual;                        // alpha_i per training unit, 0 <= alpha_i <= C
  std::vector<std::size_t> support;   // units with alpha_i > 0
  Matrix support_vectors;             // covariate rows of the support units
  Vector support_coef;                // alpha_i * y_i for the support units
  double bias = 0.0;
  double lambda = 0.0;
  double box = 0.0;                   // C = 1 / (2 lambda)
  double tol = 0.0;
  int solver_iterations = 0;
  KernelSpec kernel;
};

namespace detail {

inline double sigmoid(double eta) {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

// log(1 + exp(eta))
inline double softplus(double eta) { return eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta)); }

inline Matrix with_intercept(const Matrix& z) {
  Matrix x(z.rows(), z.cols() + 1);
  x.col(0).setOnes();
  x.rightCols(z.cols()) = z;
  return x;
}

inline void require_both_arms(const std::vector<int>& t) {
  bool has0 = false, has1 = false;
  for (int v : t) (v == 1 ? has1 : has0) = true;
  require(has0 && has1, ErrorKind::missing_group, "both treatment arms must be nonempty");
}

}  // namespace detail

struct LogisticOptions {
  int max_iter = 100;
  double tol = 1e-10;
  double ridge = 0.0;  // added to the Hessian diagonal
};

// Maximum likelihood by IRLS with step halving, so the log-likelihood never
// decreases. Perfect or quasi-complete separation is an error: it is the
// positivity violation itself.
inline PropensityFit fit_logistic(const ObservationalDataset& data, LogisticOptions options = {}) {
  data.validate();
  detail::require_both_arms(data.t);
  require(options.max_iter >= 1 && options.tol > 0.0 && options.ridge >= 0.0, ErrorKind::invalid_config,
          "bad logistic options");
  const Matrix x = detail::with_intercept(data.z);
  const auto n = x.rows();
  const auto p = x.cols();
  Vector t(n);
  for (Eigen::Index i = 0; i < n; ++i) t(i) = data.t[static_cast<std::size_t>(i)];

  auto log_lik = [&](const Vector& eta) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) ll += t(i) * eta(i) - detail::softplus(eta(i));
    return ll;
  };
  auto separates = [&](const Vector& eta) {
    for (Eigen::Index i = 0; i < n; ++i)
      if ((t(i) == 1.0 && !(eta(i) > 0.0)) || (t(i) == 0.0 && !(eta(i) < 0.0))) return false;
    return true;
  };

  PropensityFit fit;
  fit.kind = ModelKind::logistic;
  Vector beta = Vector::Zero(p);
  Vector eta = x * beta;
  double ll = log_lik(eta);
  fit.log_likelihood_trace.push_back(ll);
  bool converged = false;

  for (int iter = 1; iter <= options.max_iter && !converged; ++iter) {
    fit.iterations = iter;
    Vector prob(n), weight(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      prob(i) = detail::sigmoid(eta(i));
      weight(i) = prob(i) * (1.0 - prob(i));
    }
    const Vector grad = x.transpose() * (t - prob);
    Matrix hess = x.transpose() * weight.asDiagonal() * x;
    hess.diagonal().array() += options.ridge;
    Vector step;
    Eigen::LDLT<Matrix> ldlt(hess);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() && ldlt.vectorD().minCoeff() > 1e-12 * hess.diagonal().maxCoeff()) {
      step = ldlt.solve(grad);
    } else {
      step = hess.completeOrthogonalDecomposition().solve(grad);  // rank-deficient design
    }

    double scale = 1.0;
    Vector next_beta = beta + step;
    Vector next_eta = x * next_beta;
    double next_ll = log_lik(next_eta);
    while (next_ll < ll && scale > 1e-10) {
      scale *= 0.5;
      next_beta = beta + scale * step;
      next_eta = x * next_beta;
      next_ll = log_lik(next_eta);
    }
    if (next_ll < ll) {  // no ascent direction left
      converged = true;
      break;
    }
    converged = std::abs(next_ll - ll) <= options.tol * (1.0 + std::abs(ll));
    beta = std::move(next_beta);
    eta = std::move(next_eta);
    ll = next_ll;
    fit.log_likelihood_trace.push_back(ll);
    require(!separates(eta), ErrorKind::separation_detected,
            "a linear predictor classifies every unit correctly; the MLE does not exist");
  }
  require(converged, ErrorKind::separation_detected,
          "IRLS did not converge in " + std::to_string(options.max_iter) + " iterations; coefficients diverge");

  fit.coefficients = beta;
  fit.scores.resize(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double s = detail::sigmoid(eta(i));
    require(s > 1e-12 && s < 1.0 - 1e-12, ErrorKind::separation_detected,
            "fitted propensity at 0 or 1 for unit " + std::to_string(i) + " (quasi-complete separation)");
    fit.scores[static_cast<std::size_t>(i)] = s;
  }
  return fit;
}

template <typename Row>
double predict_propensity(const PropensityFit& fit, const Eigen::MatrixBase<Row>& z) {
  require(fit.kind == ModelKind::logistic, ErrorKind::unsupported,
          "SVM decision values are not probabilities; use a logistic fit");
  require(z.size() + 1 == fit.coefficients.size(), ErrorKind::schema_mismatch,
          "covariate row length does not match the fitted model");
  double eta = fit.coefficients(0);
  for (Eigen::Index k = 0; k < z.size(); ++k) eta += fit.coefficients(k + 1) * z(k);
  return detail::sigmoid(eta);
}

inline double predict_propensity(const PropensityFit& fit, std::span<const double> z) {
  return predict_propensity(fit, Eigen::Map<const Vector>(z.data(), static_cast<Eigen::Index>(z.size())));
}

struct TrimmingRegion {
  double c_star = 0.0;
  std::vector<bool> member;  // min(e, 1 - e) >= c_star
  bool degenerate = false;   // no grid value satisfied the cutoff rule

  std::size_t retained() const {
    std::size_t c = 0;
    for (bool m : member) c += m;
    return c;
  }
};

namespace detail {

inline bool in_region(double e, double c) { return std::min(e, 1.0 - e) >= c; }

inline double inverse_variance(double e) { return 1.0 / (e * (1.0 - e)); }

}  // namespace detail

// The cutoff rule at c: 1/(c(1-c)) <= 2 * mean{1/(e(1-e)) : c <= e <= 1-c}.
// At c = 0 the left side is replaced by the largest 1/(e(1-e)) in the
// sample, i.e. "no trimming is optimal".
inline bool crump_condition_holds(std::span<const double> scores, double c) {
  double sum = 0.0, worst = 0.0;
  std::size_t count = 0;
  for (double e : scores) {
    if (!detail::in_region(e, c)) continue;
    const double v = detail::inverse_variance(e);
    sum += v;
    worst = std::max(worst, v);
    ++count;
  }
  if (count == 0) return false;
  const double lhs = c > 0.0 ? detail::inverse_variance(c) : worst;
  return lhs <= 2.0 * sum / static_cast<double>(count);
}

// Smallest c on {0, step, 2 step, ...} below 0.5 that satisfies the cutoff
// rule; depends on the scores only.
inline TrimmingRegion crump_region(std::span<const double> scores, double step = 0.001) {
  require(!scores.empty(), ErrorKind::invalid_config, "no propensity scores");
  require(step > 0.0 && step < 0.5, ErrorKind::invalid_config, "trimming grid step must lie in (0, 0.5)");
  for (double e : scores)
    require(e > 0.0 && e < 1.0, ErrorKind::invalid_config, "propensity scores must lie strictly inside (0, 1)");

  const auto steps = static_cast<std::size_t>(std::ceil(0.5 / step - 1e-9));
  TrimmingRegion region;
  bool found = false;
  double last_nonempty = 0.0;
  for (std::size_t k = 0; k < steps; ++k) {
    const double c = static_cast<double>(k) * step;
    bool nonempty = false;
    for (double e : scores) nonempty = nonempty || detail::in_region(e, c);
    if (nonempty) last_nonempty = c;
    if (crump_condition_holds(scores, c)) {
      region.c_star = c;
      found = true;
      break;
    }
  }
  if (!found) {
    region.c_star = last_nonempty;
    region.degenerate = true;
  }
  region.member.resize(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) region.member[i] = detail::in_region(scores[i], region.c_star);
  return region;
}

}  // namespace overlap
