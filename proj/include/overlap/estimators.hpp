#pragma once

// Average causal effects over the full sample, a trimmed region or the SVM
// margin, with seeded nonparametric bootstrap standard errors.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "overlap/dataset.hpp"
#include "overlap/error.hpp"
#include "overlap/propensity.hpp"
#include "overlap/svm.hpp"

namespace overlap {

enum class Estimand { ace, ace_region, ace_margin };

inline std::string to_string(Estimand e) {
  switch (e) {
    case Estimand::ace: return "ace";
    case Estimand::ace_region: return "ace_region";
    case Estimand::ace_margin: return "ace_margin";
  }
  return "unknown";
}

enum class EstimatorKind { dim, ipw };

inline std::string to_string(EstimatorKind e) { return e == EstimatorKind::dim ? "dim" : "ipw"; }

struct CausalReport {
  Estimand estimand = Estimand::ace;
  std::string method;             // "dim", "ipw-hajek", "ipw-ht"
  double estimate = 0.0;
  double se = 0.0;
  std::string se_kind;            // "analytic", "sandwich" or "bootstrap"
  std::size_t n_subpop = 0;
  std::size_t n_treated = 0;
  std::size_t n_control = 0;
  std::string region;             // "all", "crump c*=...", "margin |f|<=..."
  double region_value = 0.0;      // c* or margin threshold
  bool high_weight = false;       // some inverse-probability weight exceeds kHighWeight
  std::size_t bootstrap_ok = 0;
  std::size_t bootstrap_failed = 0;
  std::string config_hash;
};

// Weights 1/e or 1/(1-e) above this are flagged in reports.
inline constexpr double kHighWeight = 100.0;

namespace detail {

inline std::vector<bool> all_members(std::size_t n) { return std::vector<bool>(n, true); }

inline void require_member_shape(const ObservationalDataset& data, const std::vector<bool>& member) {
  require(member.size() == data.size(), ErrorKind::invalid_config, "membership flags do not match the dataset");
}

}  // namespace detail

// Mean of Y(1) - Y(0) over members: the simulation ground truth.
inline double ace_oracle(const ObservationalDataset& data, const std::vector<bool>& member) {
  require(data.has_oracle(), ErrorKind::oracle_unavailable, "dataset carries no potential outcomes");
  detail::require_member_shape(data, member);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!member[i]) continue;
    const auto k = static_cast<Eigen::Index>(i);
    sum += (*data.oracle_y1)(k) - (*data.oracle_y0)(k);
    ++count;
  }
  require(count > 0, ErrorKind::invalid_config, "empty subpopulation");
  return sum / static_cast<double>(count);
}

// mean(y | t = 1) - mean(y | t = 0) among members, with the unpooled
// (Neyman) standard error.
inline CausalReport ace_difference_in_means(const ObservationalDataset& data, const std::vector<bool>& member) {
  detail::require_member_shape(data, member);
  double sum[2] = {0.0, 0.0};
  std::size_t count[2] = {0, 0};
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!member[i]) continue;
    sum[data.t[i]] += data.y(static_cast<Eigen::Index>(i));
    ++count[data.t[i]];
  }
  require(count[0] + count[1] > 0, ErrorKind::invalid_config, "empty subpopulation");
  require(count[0] > 0 && count[1] > 0, ErrorKind::missing_group, "subpopulation has only one treatment arm");
  const double mean[2] = {sum[0] / static_cast<double>(count[0]), sum[1] / static_cast<double>(count[1])};
  double ss[2] = {0.0, 0.0};
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!member[i]) continue;
    const double d = data.y(static_cast<Eigen::Index>(i)) - mean[data.t[i]];
    ss[data.t[i]] += d * d;
  }
  double var = 0.0;
  for (int g : {0, 1})
    if (count[g] > 1) var += ss[g] / static_cast<double>(count[g] - 1) / static_cast<double>(count[g]);

  CausalReport r;
  r.method = "dim";
  r.estimate = mean[1] - mean[0];
  r.se = std::sqrt(var);
  r.se_kind = "analytic";
  r.n_treated = count[1];
  r.n_control = count[0];
  r.n_subpop = count[0] + count[1];
  return r;
}

inline CausalReport ace_difference_in_means(const ObservationalDataset& data) {
  return ace_difference_in_means(data, detail::all_members(data.size()));
}

// Inverse-probability weighting with scores e_i. Stabilized is the Hajek
// (self-normalized) form; otherwise Horvitz-Thompson. The standard error is
// the sandwich form that treats the scores as known.
inline CausalReport ace_ipw(const ObservationalDataset& data, std::span<const double> scores,
                            const std::vector<bool>& member, bool stabilized = true) {
  detail::require_member_shape(data, member);
  require(scores.size() == data.size(), ErrorKind::invalid_config, "one score per unit required");
  double wy1 = 0.0, w1 = 0.0, vy0 = 0.0, v0 = 0.0;
  std::size_t count[2] = {0, 0};
  bool high = false;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (!member[i]) continue;
    const double e = scores[i];
    require(e > 0.0 && e < 1.0, ErrorKind::division_hazard,
            "propensity score of unit " + std::to_string(i) + " is 0 or 1");
    const double y = data.y(static_cast<Eigen::Index>(i));
    if (data.t[i] == 1) {
      wy1 += y / e;
      w1 += 1.0 / e;
      high = high || 1.0 / e > kHighWeight;
    } else {
      vy0 += y / (1.0 - e);
      v0 += 1.0 / (1.0 - e);
      high = high || 1.0 / (1.0 - e) > kHighWeight;
    }
    ++count[data.t[i]];
  }
  const std::size_t n = count[0] + count[1];
  require(n > 0, ErrorKind::invalid_config, "empty subpopulation");
  require(count[0] > 0 && count[1] > 0, ErrorKind::missing_group, "subpopulation has only one treatment arm");
  const double nn = static_cast<double>(n);

  CausalReport r;
  r.high_weight = high;
  r.n_treated = count[1];
  r.n_control = count[0];
  r.n_subpop = n;
  r.se_kind = "sandwich";
  double var_sum = 0.0;
  if (stabilized) {
    const double mu1 = wy1 / w1, mu0 = vy0 / v0;
    r.method = "ipw-hajek";
    r.estimate = mu1 - mu0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!member[i]) continue;
      const double e = scores[i], y = data.y(static_cast<Eigen::Index>(i));
      const double phi = data.t[i] == 1 ? (y - mu1) / e / (w1 / nn) : -(y - mu0) / (1.0 - e) / (v0 / nn);
      var_sum += phi * phi;
    }
  } else {
    r.method = "ipw-ht";
    r.estimate = (wy1 - vy0) / nn;
    for (std::size_t i = 0; i < data.size(); ++i) {
      if (!member[i]) continue;
      const double e = scores[i], y = data.y(static_cast<Eigen::Index>(i));
      const double phi = (data.t[i] == 1 ? y / e : -y / (1.0 - e)) - r.estimate;
      var_sum += phi * phi;
    }
  }
  r.se = std::sqrt(var_sum) / nn;
  return r;
}

inline CausalReport ace_ipw(const ObservationalDataset& data, const PropensityFit& fit,
                            const std::vector<bool>& member, bool stabilized = true) {
  require(fit.kind == ModelKind::logistic, ErrorKind::unsupported, "IPW needs logistic propensity scores");
  return ace_ipw(data, std::span<const double>(fit.scores), member, stabilized);
}

struct MarginPipelineOptions {
  KernelSpec kernel = KernelSpec::gaussian(1.0);
  double lambda = 0.5;
  double threshold = 1.0;
  EstimatorKind estimator = EstimatorKind::dim;
  SvmOptions svm;
  LogisticOptions logistic;
};

struct MarginPipelineResult {
  CausalReport report;
  PropensityFit svm;
  MarginSet margin;
};

namespace detail {

inline MarginPipelineResult margin_pipeline_on_gram(const ObservationalDataset& data, const Matrix& gram,
                                                    const MarginPipelineOptions& o) {
  MarginPipelineResult out;
  out.svm = fit_kernel_svm_gram(gram, data.t, o.lambda, o.kernel, data.z, o.svm);
  out.margin = margin_set(out.svm, o.threshold);
  const std::vector<bool> member = out.margin.flags(data.size());
  if (o.estimator == EstimatorKind::dim) {
    out.report = ace_difference_in_means(data, member);
  } else {
    // Scores come from a logistic model fitted on the margin units alone.
    const ObservationalDataset inside = data.rows(out.margin.indices);
    const PropensityFit logit = fit_logistic(inside, o.logistic);
    out.report = ace_ipw(inside, logit, all_members(inside.size()));
  }
  out.report.estimand = Estimand::ace_margin;
  out.report.region = "margin |f|<=" + std::to_string(o.threshold);
  out.report.region_value = o.threshold;
  return out;
}

}  // namespace detail

// SVM fit -> margin set -> estimator on the margin units.
inline MarginPipelineResult margin_ace_pipeline(const ObservationalDataset& data, const MarginPipelineOptions& o) {
  data.validate();
  return detail::margin_pipeline_on_gram(data, gram_matrix(o.kernel, data.z), o);
}

struct BootstrapResult {
  double se = 0.0;
  std::size_t ok = 0;
  std::size_t failed = 0;
  std::vector<double> estimates;  // successful resamples, in resample order
};

// Standard deviation of `estimator(rows)` over n_boot resamples drawn with
// replacement. Resample b draws from its own generator seeded by (seed, b),
// so results do not depend on evaluation order. Resamples on which the
// estimand is undefined (empty margin, one arm, separation) are counted and
// skipped.
inline BootstrapResult bootstrap_se_indexed(const std::function<double(std::span<const std::size_t>)>& estimator,
                                            std::size_t n_rows, std::size_t n_boot, std::uint64_t seed) {
  require(n_boot >= 100, ErrorKind::invalid_config, "bootstrap needs at least 100 resamples");
  require(n_rows >= 1, ErrorKind::invalid_config, "bootstrap needs data");
  BootstrapResult out;
  std::vector<std::size_t> rows(n_rows);
  for (std::size_t b = 0; b < n_boot; ++b) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(b)};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::size_t> pick(0, n_rows - 1);
    for (auto& r : rows) r = pick(rng);
    try {
      out.estimates.push_back(estimator(rows));
      ++out.ok;
    } catch (const Error& e) {
      switch (e.kind()) {
        case ErrorKind::empty_margin:
        case ErrorKind::missing_group:
        case ErrorKind::separation_detected:
        case ErrorKind::division_hazard:
          ++out.failed;
          break;
        default:
          throw;
      }
    }
  }
  require(2 * out.failed <= n_boot, ErrorKind::unstable_estimand,
          std::to_string(out.failed) + " of " + std::to_string(n_boot) + " bootstrap resamples failed");
  if (out.ok >= 2) {
    double mean = 0.0;
    for (double v : out.estimates) mean += v;
    mean /= static_cast<double>(out.ok);
    double ss = 0.0;
    for (double v : out.estimates) ss += (v - mean) * (v - mean);
    out.se = std::sqrt(ss / static_cast<double>(out.ok - 1));
  }
  return out;
}

inline BootstrapResult bootstrap_se(const std::function<double(const ObservationalDataset&)>& estimator,
                                    const ObservationalDataset& data, std::size_t n_boot, std::uint64_t seed) {
  return bootstrap_se_indexed([&](std::span<const std::size_t> rows) { return estimator(data.rows(rows)); },
                              data.size(), n_boot, seed);
}

// Margin pipeline with a bootstrap SE that refits the SVM on every resample.
// The Gram matrix is computed once and indexed per resample.
inline MarginPipelineResult margin_ace_with_bootstrap(const ObservationalDataset& data,
                                                      const MarginPipelineOptions& o, std::size_t n_boot,
                                                      std::uint64_t seed) {
  data.validate();
  const Matrix gram = gram_matrix(o.kernel, data.z);
  MarginPipelineResult out = detail::margin_pipeline_on_gram(data, gram, o);
  const BootstrapResult boot = bootstrap_se_indexed(
      [&](std::span<const std::size_t> rows) {
        const std::vector<Eigen::Index> idx(rows.begin(), rows.end());
        const Matrix sub = gram(idx, idx);
        return detail::margin_pipeline_on_gram(data.rows(rows), sub, o).report.estimate;
      },
      data.size(), n_boot, seed);
  out.report.se = boot.se;
  out.report.se_kind = "bootstrap";
  out.report.bootstrap_ok = boot.ok;
  out.report.bootstrap_failed = boot.failed;
  return out;
}

}  // namespace overlap
