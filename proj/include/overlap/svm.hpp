#pragma once

// Kernel SVM for the margin-based estimand. The primal
//
//   minimize  sum_i |1 - t_i f(z_i)|_+  +  lambda ||f||_K^2,   f = h + b,
//
// is the C-SVM with C = 1 / (2 lambda); its dual is solved by sequential
// minimal optimization with second-order working-set selection.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "overlap/dataset.hpp"
#include "overlap/error.hpp"
#include "overlap/gp.hpp"
#include "overlap/propensity.hpp"

namespace overlap {

inline Matrix gram_matrix(const KernelSpec& kernel, const Matrix& z) {
  kernel.validate();
  if (kernel.kind == KernelKind::user_matrix) {
    require(kernel.matrix.rows() == z.rows(), ErrorKind::invalid_config,
            "user kernel matrix size does not match the number of units");
    return kernel.matrix;
  }
  const auto n = z.rows();
  Matrix k(n, n);
  if (kernel.kind == KernelKind::linear) {
    k.noalias() = z * z.transpose();
    return k;
  }
  const Vector sq = z.rowwise().squaredNorm();
  k.noalias() = z * z.transpose();
  const double inv = -1.0 / (2.0 * kernel.sigma2);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) k(i, j) = std::exp(inv * std::max(0.0, sq(i) + sq(j) - 2.0 * k(i, j)));
  return k;
}

struct SvmOptions {
  double tol = 1e-5;  // KKT gap at termination
  long max_iter = 0;  // 0: max(1e7, 100 n)
};

namespace detail {

inline std::vector<double> signed_labels(const std::vector<int>& t) {
  std::vector<double> y(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) y[i] = t[i] == 1 ? 1.0 : -1.0;
  return y;
}

}  // namespace detail

// Solves the dual on a precomputed Gram matrix. `kernel` and `z` are only
// recorded so the fit can score new rows.
inline PropensityFit fit_kernel_svm_gram(const Matrix& gram, const std::vector<int>& t, double lambda,
                                         const KernelSpec& kernel, const Matrix& z, SvmOptions options = {}) {
  const auto n = static_cast<Eigen::Index>(t.size());
  require(gram.rows() == n && gram.cols() == n, ErrorKind::invalid_config, "gram matrix size differs from labels");
  require(std::isfinite(lambda) && lambda > 0.0, ErrorKind::invalid_config, "lambda must be positive");
  require(options.tol > 0.0, ErrorKind::invalid_config, "svm tolerance must be positive");
  for (int v : t) require(v == 0 || v == 1, ErrorKind::invalid_config, "treatment must be 0 or 1");
  detail::require_both_arms(t);

  const std::vector<double> y = detail::signed_labels(t);
  const double C = 1.0 / (2.0 * lambda);
  constexpr double tau = 1e-12;
  const long max_iter = options.max_iter > 0 ? options.max_iter : std::max<long>(10000000L, 100L * n);

  std::vector<double> alpha(static_cast<std::size_t>(n), 0.0), grad(static_cast<std::size_t>(n), -1.0);
  auto upper = [&](std::size_t k) { return alpha[k] >= C; };
  auto lower = [&](std::size_t k) { return alpha[k] <= 0.0; };
  auto q = [&](std::size_t a, std::size_t b) {
    return y[a] * y[b] * gram(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
  };

  long iter = 0;
  for (; iter < max_iter; ++iter) {
    // Working set: i maximizes -y G over I_up, j minimizes the second-order
    // decrease over I_low.
    double gmax = -std::numeric_limits<double>::infinity(), gmax2 = -std::numeric_limits<double>::infinity();
    std::size_t i = static_cast<std::size_t>(-1);
    for (std::size_t k = 0; k < alpha.size(); ++k) {
      const bool in_up = y[k] > 0 ? !upper(k) : !lower(k);
      if (in_up && -y[k] * grad[k] >= gmax) {
        gmax = -y[k] * grad[k];
        i = k;
      }
    }
    if (i == static_cast<std::size_t>(-1)) break;
    std::size_t j = static_cast<std::size_t>(-1);
    double best = std::numeric_limits<double>::infinity();
    const double kii = gram(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
    for (std::size_t k = 0; k < alpha.size(); ++k) {
      const bool in_low = y[k] > 0 ? !lower(k) : !upper(k);
      if (!in_low) continue;
      gmax2 = std::max(gmax2, y[k] * grad[k]);
      const double b = gmax + y[k] * grad[k];
      if (b > 0.0) {
        const auto ki = static_cast<Eigen::Index>(k), ii = static_cast<Eigen::Index>(i);
        double a = kii + gram(ki, ki) - 2.0 * y[i] * y[k] * gram(ii, ki);
        if (a <= 0.0) a = tau;
        const double obj = -(b * b) / a;
        if (obj <= best) {
          best = obj;
          j = k;
        }
      }
    }
    if (gmax + gmax2 < options.tol || j == static_cast<std::size_t>(-1)) break;

    const double old_i = alpha[i], old_j = alpha[j];
    const double qii = kii, qjj = gram(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j));
    const double qij = q(i, j);
    if (y[i] != y[j]) {
      double quad = qii + qjj + 2.0 * qij;
      if (quad <= 0.0) quad = tau;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = alpha[i] - alpha[j];
      alpha[i] += delta;
      alpha[j] += delta;
      if (diff > 0.0) {
        if (alpha[j] < 0.0) { alpha[j] = 0.0; alpha[i] = diff; }
      } else if (alpha[i] < 0.0) {
        alpha[i] = 0.0; alpha[j] = -diff;
      }
      if (diff > 0.0) {
        if (alpha[i] > C) { alpha[i] = C; alpha[j] = C - diff; }
      } else if (alpha[j] > C) {
        alpha[j] = C; alpha[i] = C + diff;
      }
    } else {
      double quad = qii + qjj - 2.0 * qij;
      if (quad <= 0.0) quad = tau;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = alpha[i] + alpha[j];
      alpha[i] -= delta;
      alpha[j] += delta;
      if (sum > C) {
        if (alpha[i] > C) { alpha[i] = C; alpha[j] = sum - C; }
        if (alpha[j] > C) { alpha[j] = C; alpha[i] = sum - C; }
      } else {
        if (alpha[j] < 0.0) { alpha[j] = 0.0; alpha[i] = sum; }
        if (alpha[i] < 0.0) { alpha[i] = 0.0; alpha[j] = sum; }
      }
    }
    const double di = alpha[i] - old_i, dj = alpha[j] - old_j;
    for (std::size_t k = 0; k < alpha.size(); ++k) grad[k] += q(k, i) * di + q(k, j) * dj;
  }

  // Bias from free vectors, or the midpoint of the feasible interval.
  double rho_sum = 0.0, ub = std::numeric_limits<double>::infinity(), lb = -std::numeric_limits<double>::infinity();
  std::size_t free = 0;
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    const double yg = y[k] * grad[k];
    if (upper(k)) {
      if (y[k] < 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else if (lower(k)) {
      if (y[k] > 0) ub = std::min(ub, yg); else lb = std::max(lb, yg);
    } else {
      ++free;
      rho_sum += yg;
    }
  }
  const double rho = free > 0 ? rho_sum / static_cast<double>(free) : 0.5 * (ub + lb);

  PropensityFit fit;
  fit.kind = ModelKind::svm;
  fit.lambda = lambda;
  fit.box = C;
  fit.tol = options.tol;
  fit.kernel = kernel;
  fit.bias = -rho;
  fit.solver_iterations = static_cast<int>(iter);
  fit.dual = Eigen::Map<const Vector>(alpha.data(), n);
  for (std::size_t k = 0; k < alpha.size(); ++k)
    if (alpha[k] > 0.0) fit.support.push_back(k);
  const auto m = static_cast<Eigen::Index>(fit.support.size());
  fit.support_coef.resize(m);
  if (z.rows() == n) fit.support_vectors.resize(m, z.cols());
  for (Eigen::Index s = 0; s < m; ++s) {
    const std::size_t k = fit.support[static_cast<std::size_t>(s)];
    fit.support_coef(s) = alpha[k] * y[k];
    if (z.rows() == n) fit.support_vectors.row(s) = z.row(static_cast<Eigen::Index>(k));
  }
  // f(z_i) = sum_k alpha_k y_k K_ik + b = y_i (G_i + 1) + b
  fit.decision_values.resize(alpha.size());
  for (std::size_t k = 0; k < alpha.size(); ++k) fit.decision_values[k] = y[k] * (grad[k] + 1.0) + fit.bias;
  return fit;
}

inline PropensityFit fit_kernel_svm(const ObservationalDataset& data, const KernelSpec& kernel, double lambda,
                                    SvmOptions options = {}) {
  data.validate();
  detail::require_both_arms(data.t);
  return fit_kernel_svm_gram(gram_matrix(kernel, data.z), data.t, lambda, kernel, data.z, options);
}

// f(z) for a new covariate row.
template <typename Row>
double svm_decision(const PropensityFit& fit, const Eigen::MatrixBase<Row>& z) {
  require(fit.kind == ModelKind::svm, ErrorKind::unsupported, "not an svm fit");
  require(fit.kernel.kind != KernelKind::user_matrix, ErrorKind::unsupported,
          "user-matrix kernels cannot score new rows");
  require(fit.support_vectors.rows() == fit.support_coef.size(), ErrorKind::unsupported,
          "fit does not carry its support vectors");
  if (fit.support_coef.size() > 0)
    require(z.size() == fit.support_vectors.cols(), ErrorKind::schema_mismatch, "covariate row length mismatch");
  double f = fit.bias;
  for (Eigen::Index s = 0; s < fit.support_coef.size(); ++s)
    f += fit.support_coef(s) * kernel_eval(fit.kernel, fit.support_vectors.row(s).transpose(), z);
  return f;
}

// Largest violation of the KKT conditions of the dual, recomputed from the
// dual weights and the Gram matrix:
//   alpha = 0      => t f >= 1
//   0 < alpha < C  => t f == 1
//   alpha = C      => t f <= 1
// plus the box and equality constraints.
inline double svm_kkt_residual(const PropensityFit& fit, const Matrix& gram, const std::vector<int>& t) {
  require(fit.kind == ModelKind::svm, ErrorKind::unsupported, "not an svm fit");
  const auto n = static_cast<Eigen::Index>(t.size());
  require(fit.dual.size() == n && gram.rows() == n, ErrorKind::invalid_config, "fit does not match the data");
  const std::vector<double> y = detail::signed_labels(t);
  const double C = fit.box;
  const double bound_tol = 1e-12 * std::max(1.0, C);
  double residual = 0.0, balance = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double a = fit.dual(i);
    residual = std::max({residual, -a, a - C});
    balance += a * y[static_cast<std::size_t>(i)];
    double f = fit.bias;
    for (Eigen::Index k = 0; k < n; ++k) f += fit.dual(k) * y[static_cast<std::size_t>(k)] * gram(i, k);
    const double margin = y[static_cast<std::size_t>(i)] * f;
    if (a <= bound_tol) residual = std::max(residual, 1.0 - margin);
    else if (a >= C - bound_tol) residual = std::max(residual, margin - 1.0);
    else residual = std::max(residual, std::abs(margin - 1.0));
  }
  return std::max(residual, std::abs(balance) / std::max(1.0, C));
}

struct MarginSet {
  std::vector<std::size_t> indices;
  double threshold = 1.0;

  std::vector<bool> flags(std::size_t n) const {
    std::vector<bool> out(n, false);
    for (auto i : indices) out.at(i) = true;
    return out;
  }
};

// Units with |f(z_i)| <= threshold, the hinge elbow by default.
inline MarginSet margin_set(std::span<const double> decision_values, double threshold = 1.0) {
  require(std::isfinite(threshold) && threshold > 0.0, ErrorKind::invalid_config, "margin threshold must be positive");
  MarginSet m;
  m.threshold = threshold;
  for (std::size_t i = 0; i < decision_values.size(); ++i)
    if (std::abs(decision_values[i]) <= threshold) m.indices.push_back(i);
  require(!m.indices.empty(), ErrorKind::empty_margin, "no unit lies in the margin");
  return m;
}

inline MarginSet margin_set(const PropensityFit& fit, double threshold = 1.0) {
  require(fit.kind == ModelKind::svm, ErrorKind::unsupported, "margin sets need an svm fit");
  return margin_set(std::span<const double>(fit.decision_values), threshold);
}

}  // namespace overlap
