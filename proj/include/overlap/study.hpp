#pragma once

// Orchestration: the functional phase-transition study, a confounded-data
// simulator with known effect, and the right-heart-catheterization analysis.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "overlap/config.hpp"
#include "overlap/csv.hpp"
#include "overlap/divergence.hpp"
#include "overlap/estimators.hpp"
#include "overlap/gp.hpp"
#include "overlap/mercer_io.hpp"
#include "overlap/propensity.hpp"
#include "overlap/report.hpp"
#include "overlap/spectral.hpp"
#include "overlap/svm.hpp"
#include "overlap/tree.hpp"

namespace overlap {

// ---------------------------------------------------------------------------
// Functional phase transition

enum class MercerScenario { convergent, divergent, null_mean };

inline std::string to_string(MercerScenario s) {
  switch (s) {
    case MercerScenario::convergent: return "convergent";
    case MercerScenario::divergent: return "divergent";
    case MercerScenario::null_mean: return "null";
  }
  return "unknown";
}

// convergent: c_j = j^-2, a_j = j^-2   (sum a_j^2 / c_j < inf)
// divergent:  c_j = 2^-j, a_j = 1/j    (sum a_j^2 / c_j = inf)
// null:       c_j = j^-2, a_j = 0
// The basis is the sine family orthonormalized under the grid's trapezoid
// weights, so the coefficients are exact on the simulation grid.
inline MercerSpec scenario_mercer(MercerScenario s, const Grid& grid, std::size_t terms) {
  require(terms >= 1, ErrorKind::invalid_config, "need at least one Mercer term");
  Vector c(static_cast<Eigen::Index>(terms)), a(static_cast<Eigen::Index>(terms));
  for (std::size_t k = 0; k < terms; ++k) {
    const double j = static_cast<double>(k + 1);
    const auto i = static_cast<Eigen::Index>(k);
    switch (s) {
      case MercerScenario::convergent:
        c(i) = 1.0 / (j * j);
        a(i) = 1.0 / (j * j);
        break;
      case MercerScenario::divergent:
        c(i) = std::ldexp(1.0, -static_cast<int>(k + 1));
        a(i) = 1.0 / j;
        break;
      case MercerScenario::null_mean:
        c(i) = 1.0 / (j * j);
        a(i) = 0.0;
        break;
    }
  }
  return MercerSpec(grid, c, a, orthonormalize(sine_basis(grid, terms), grid.trapezoid_weights()));
}

// Group means and the pooled within-group covariance, used for both groups.
inline GaussianMeasurePair empirical_gaussian_pair(const FunctionalSampleSet& s) {
  s.validate();
  const std::size_t n0 = s.count(0), n1 = s.count(1);
  require(n0 >= 2 && n1 >= 2, ErrorKind::missing_group, "each group needs at least two paths");
  const auto g = s.values.cols();
  Vector m[2] = {Vector::Zero(g), Vector::Zero(g)};
  for (Eigen::Index r = 0; r < s.values.rows(); ++r) m[s.group[static_cast<std::size_t>(r)]] += s.values.row(r).transpose();
  m[0] /= static_cast<double>(n0);
  m[1] /= static_cast<double>(n1);
  Matrix centered = s.values;
  for (Eigen::Index r = 0; r < centered.rows(); ++r) centered.row(r) -= m[s.group[static_cast<std::size_t>(r)]].transpose();
  const Matrix cov = centered.transpose() * centered / static_cast<double>(n0 + n1 - 2);
  return {m[0], m[1], cov, cov};
}

// Median pairwise squared distance over (up to) the first 300 rows.
inline double median_heuristic(const Matrix& z) {
  const Eigen::Index m = std::min<Eigen::Index>(z.rows(), 300);
  std::vector<double> d;
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = i + 1; j < m; ++j) d.push_back((z.row(i) - z.row(j)).squaredNorm());
  require(!d.empty(), ErrorKind::invalid_config, "median heuristic needs two rows");
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2), d.end());
  const double med = d[d.size() / 2];
  return med > 0.0 ? med : 1.0;
}

struct HoldoutOptions {
  std::string kernel = "gaussian";  // or "linear"
  double sigma2 = 0.0;              // gaussian only; 0 picks the median heuristic
  double lambda = 0.5;
  SvmOptions svm;
};

// Even rows train, odd rows test; accuracy of sign(f) on the test rows.
inline double svm_holdout_accuracy(const FunctionalSampleSet& s, const HoldoutOptions& o) {
  s.validate();
  std::vector<std::size_t> train, test;
  for (std::size_t r = 0; r < s.samples(); ++r) (r % 2 == 0 ? train : test).push_back(r);
  ObservationalDataset tr;
  tr.z.resize(static_cast<Eigen::Index>(train.size()), s.values.cols());
  tr.y = Vector::Zero(static_cast<Eigen::Index>(train.size()));
  for (std::size_t k = 0; k < train.size(); ++k) {
    tr.z.row(static_cast<Eigen::Index>(k)) = s.values.row(static_cast<Eigen::Index>(train[k]));
    tr.t.push_back(s.group[train[k]]);
  }
  KernelSpec kernel;
  if (o.kernel == "linear") {
    kernel = KernelSpec::linear();
  } else if (o.kernel == "gaussian") {
    kernel = KernelSpec::gaussian(o.sigma2 > 0.0 ? o.sigma2 : median_heuristic(tr.z));
  } else {
    fail(ErrorKind::invalid_config, "hold-out kernel must be linear or gaussian, got '" + o.kernel + "'");
  }
  const PropensityFit fit = fit_kernel_svm(tr, kernel, o.lambda, o.svm);
  std::size_t correct = 0;
  for (auto r : test) {
    const double f = svm_decision(fit, s.values.row(static_cast<Eigen::Index>(r)).transpose());
    correct += (f > 0.0 ? 1 : 0) == s.group[r];
  }
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

struct PhaseStudyOptions {
  std::size_t n_per_group = 1000;
  std::vector<std::size_t> grids = {8, 32, 128};
  std::size_t sim_terms = 50;  // Mercer terms used to simulate paths
  std::size_t terms = 20;      // J for the phase-transition statistic
  double noise_sd = 0.05;      // measurement error keeping covariances nonsingular
  std::vector<MercerScenario> scenarios = {MercerScenario::convergent, MercerScenario::divergent,
                                           MercerScenario::null_mean};
  HoldoutOptions holdout;
  SpectralOptions spectral;
  VerdictThresholds verdict;
  std::uint64_t seed = kDefaultSeed;
};

inline PhaseStudyOptions phase_options_from(const RunConfig& cfg) {
  PhaseStudyOptions o;
  o.n_per_group = cfg.count("n_per_group", o.n_per_group);
  if (cfg.has("grids")) {
    o.grids.clear();
    for (double g : cfg.numbers("grids")) {
      require(g >= 1 && g == std::floor(g), ErrorKind::invalid_config, "grid sizes must be positive integers");
      o.grids.push_back(static_cast<std::size_t>(g));
    }
  }
  o.sim_terms = cfg.count("sim_terms", o.sim_terms);
  o.terms = cfg.count("terms", o.terms);
  o.noise_sd = cfg.num("noise_sd", o.noise_sd);
  o.holdout.kernel = cfg.str("kernel", o.holdout.kernel);
  o.verdict.noise_multiple = cfg.num("noise_multiple", o.verdict.noise_multiple);
  o.holdout.sigma2 = cfg.num("holdout_sigma2", o.holdout.sigma2);
  o.holdout.lambda = cfg.num("holdout_lambda", o.holdout.lambda);
  o.holdout.svm.tol = cfg.num("svm_tol", o.holdout.svm.tol);
  o.spectral.relative_ridge = cfg.num("relative_ridge", o.spectral.relative_ridge);
  o.verdict.growth_threshold = cfg.num("growth_threshold", o.verdict.growth_threshold);
  o.verdict.plausible_ratio = cfg.num("plausible_ratio", o.verdict.plausible_ratio);
  o.seed = cfg.seed();
  return o;
}

struct PhaseCurvePoint {
  std::string scenario;
  std::size_t grid = 0;
  DivergenceResult divergence;
  std::optional<PhaseTransitionReport> phase;  // absent when the grid is smaller than J
  double accuracy = 0.0;
};

struct PhaseStudyResult {
  std::vector<PhaseCurvePoint> curve;
  StudyReport report;

  const PhaseCurvePoint& at(const std::string& scenario, std::size_t grid) const {
    for (const auto& p : curve)
      if (p.scenario == scenario && p.grid == grid) return p;
    fail(ErrorKind::invalid_config, "no curve point for " + scenario + " at grid " + std::to_string(grid));
  }
};

// Paths are simulated once per scenario on the finest grid and observed on
// nested sub-grids, so discrepancies across grid sizes come from resolution
// alone. Custom specs can replace a scenario through `<scenario>.mercer_spec`;
// their grid must then be the finest study grid.
inline PhaseStudyResult run_phase_transition_study(const RunConfig& cfg) {
  const PhaseStudyOptions o = phase_options_from(cfg);
  require(!o.grids.empty(), ErrorKind::invalid_config, "no grid sizes configured");
  require(o.n_per_group >= 4, ErrorKind::invalid_config, "need at least four paths per group");
  const std::size_t finest = *std::max_element(o.grids.begin(), o.grids.end());
  for (auto g : o.grids)
    require(finest % g == 0, ErrorKind::invalid_config,
            "grid size " + std::to_string(g) + " does not divide the finest grid " + std::to_string(finest));
  const Grid fine = Grid::unit(finest);

  PhaseStudyResult result;
  result.report = StudyReport::for_config("simulate", cfg);
  Json curves = Json::array();
  std::uint64_t stream = 0;
  for (MercerScenario scenario : o.scenarios) {
    const std::string name = to_string(scenario);
    const std::string custom = cfg.str(name + ".mercer_spec");
    MercerSpec spec = custom.empty() ? scenario_mercer(scenario, fine, o.sim_terms) : read_mercer_spec(custom);
    require(spec.grid() == fine, ErrorKind::invalid_config,
            "Mercer spec for '" + name + "' must live on the finest study grid");
    const std::uint64_t base = o.seed + 1000 * stream++;
    FunctionalSampleSet paths = concat(sample_paths(spec, o.n_per_group, base, GroupMean::zero),
                                       sample_paths(spec, o.n_per_group, base + 1, GroupMean::m1));
    paths = add_observation_noise(std::move(paths), o.noise_sd, base + 2);

    for (std::size_t g : o.grids) {
      std::vector<std::size_t> cols;
      for (std::size_t k = 1; k <= g; ++k) cols.push_back(k * (finest / g) - 1);
      const FunctionalSampleSet view = paths.restrict_to(cols);
      PhaseCurvePoint point;
      point.scenario = name;
      point.grid = g;
      point.divergence = gaussian_bhattacharyya(empirical_gaussian_pair(view));
      if (o.terms <= g) {
        const SpectralEstimate est =
            project_mean_difference(view, empirical_eigendecomposition(view, o.terms, o.spectral));
        PhaseTransitionReport ptr = phase_transition_statistic(est);
        ptr.verdict = overlap_verdict(ptr, o.verdict);
        point.phase = ptr;
      }
      point.accuracy = svm_holdout_accuracy(view, o.holdout);

      Json row{{"scenario", name}, {"grid", g}, {"divergence", to_json(point.divergence)},
               {"holdout_accuracy", number(point.accuracy)}};
      row["phase_transition"] = point.phase ? to_json(*point.phase) : Json(nullptr);
      curves.push_back(row);
      result.curve.push_back(std::move(point));
    }
  }
  result.report.sections["curves"] = curves;
  result.report.sections["study"] = {{"n_per_group", o.n_per_group}, {"sim_terms", o.sim_terms},
                                     {"terms", o.terms},             {"noise_sd", number(o.noise_sd)},
                                     {"grids", o.grids},             {"holdout_kernel", o.holdout.kernel},
                                     {"holdout_lambda", number(o.holdout.lambda)}};
  // Headline numbers at the finest grid.
  for (const auto& p : result.curve) {
    if (p.grid != finest || p.scenario != "divergent") continue;
    result.report.divergence = p.divergence;
    if (p.phase) result.report.phase_transition = *p.phase;
  }
  return result;
}

inline void write_curves_csv(std::ostream& out, const std::vector<PhaseCurvePoint>& curve) {
  out << "scenario,grid,L,D2,bhattacharyya_distance,bhattacharyya_coefficient,growth_ratio,partial_sum,verdict,"
         "holdout_accuracy\n";
  for (const auto& p : curve) {
    out << p.scenario << ',' << p.grid << ',' << detail::format_double(p.divergence.L) << ','
        << detail::format_double(p.divergence.D2) << ',' << detail::format_double(p.divergence.bhat_distance) << ','
        << detail::format_double(p.divergence.bhat_coefficient) << ',';
    if (p.phase) {
      out << detail::format_double(p.phase->growth_ratio) << ',' << detail::format_double(p.phase->total()) << ','
          << to_string(p.phase->verdict);
    } else {
      out << ",,";
    }
    out << ',' << detail::format_double(p.accuracy) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Vector-covariate simulation with known effect

struct ConfoundedOptions {
  std::size_t n = 1000;
  std::size_t p = 2;
  double effect = 1.0;
  double extreme_fraction = 0.0;  // share of units pushed to |z_1| >= 8
  bool randomized = false;        // e = 1/2 regardless of covariates
};

struct SimulatedStudy {
  ObservationalDataset data;
  std::vector<double> true_scores;
};

// z ~ N(0, I_p); e(z) = expit(z_1); Y(0) = 0.6 z_1 + 0.5 sum_{k>1} z_k + N(0, 1);
// Y(1) = Y(0) + effect. The z_1 term biases the naive difference in means
// by about +0.5. Extreme units have z_1 = +-(8 + |N(0, 1/4)|), so
// their propensities fall outside [0.001, 0.999].
inline SimulatedStudy simulate_confounded(const ConfoundedOptions& o, std::uint64_t seed) {
  require(o.n >= 2 && o.p >= 1, ErrorKind::invalid_config, "need n >= 2 and p >= 1");
  require(o.extreme_fraction >= 0.0 && o.extreme_fraction <= 1.0, ErrorKind::invalid_config,
          "extreme fraction must lie in [0, 1]");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  SimulatedStudy s;
  auto& d = s.data;
  const auto n = static_cast<Eigen::Index>(o.n), p = static_cast<Eigen::Index>(o.p);
  d.z.resize(n, p);
  d.y.resize(n);
  d.t.resize(o.n);
  d.oracle_y0 = Vector(n);
  d.oracle_y1 = Vector(n);
  for (Eigen::Index k = 0; k < p; ++k) d.covariate_names.push_back("z" + std::to_string(k + 1));
  s.true_scores.resize(o.n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < p; ++k) d.z(i, k) = normal(rng);
    if (unif(rng) < o.extreme_fraction) {
      const double side = unif(rng) < 0.5 ? -1.0 : 1.0;
      d.z(i, 0) = side * (8.0 + 0.5 * std::abs(normal(rng)));
    }
    const double e = o.randomized ? 0.5 : detail::sigmoid(d.z(i, 0));
    s.true_scores[static_cast<std::size_t>(i)] = e;
    double y0 = 0.6 * d.z(i, 0) + normal(rng);
    for (Eigen::Index k = 1; k < p; ++k) y0 += 0.5 * d.z(i, k);
    (*d.oracle_y0)(i) = y0;
    (*d.oracle_y1)(i) = y0 + o.effect;
    const int t = unif(rng) < e ? 1 : 0;
    d.t[static_cast<std::size_t>(i)] = t;
    d.y(i) = t == 1 ? y0 + o.effect : y0;
  }
  d.validate();
  return s;
}

inline ConfoundedOptions confounded_options_from(const RunConfig& cfg) {
  ConfoundedOptions o;
  o.n = cfg.count("n", o.n);
  o.p = cfg.count("p", o.p);
  o.effect = cfg.num("effect", o.effect);
  o.extreme_fraction = cfg.num("extreme_fraction", o.extreme_fraction);
  o.randomized = cfg.str("scenario", "confounded") == "randomized";
  return o;
}

// ---------------------------------------------------------------------------
// Right heart catheterization analysis

inline constexpr std::size_t kRhcExpectedRows = 5735;
inline constexpr std::size_t kRhcExpectedTreated = 2184;
inline constexpr std::size_t kRhcReferenceMargin = 3663;
inline constexpr double kRhcReferenceAce = 0.049;
inline constexpr double kRhcReferenceSe = 0.016;

// Baseline covariates used when the config names none.
inline std::vector<std::string> rhc_default_covariates() {
  return {"age",   "sex",   "race",  "edu",   "income", "ninsclas", "cat1",  "das2d3pc", "dnr1",  "ca",
          "surv2md1", "aps1", "scoma1", "wtkilo1", "temp1", "meanbp1", "resp1", "hrt1",   "pafi1", "paco21",
          "ph1",   "wblc1", "hema1", "sod1",  "pot1",   "crea1",    "bili1", "alb1"};
}

inline std::vector<std::string> rhc_default_categorical() {
  return {"sex", "race", "income", "ninsclas", "cat1", "dnr1", "ca"};
}

inline DatasetSchema schema_from(const RunConfig& cfg, const DatasetSchema& defaults = {}) {
  DatasetSchema s = defaults;
  s.outcome = cfg.str("outcome", s.outcome);
  s.treatment = cfg.str("treatment", s.treatment);
  if (cfg.has("covariates")) s.covariates = cfg.list("covariates");
  if (cfg.has("categorical")) s.categorical = cfg.list("categorical");
  if (cfg.has("treatment_map")) s.treatment_map = parse_value_map(cfg.str("treatment_map"));
  if (cfg.has("outcome_map")) s.outcome_map = parse_value_map(cfg.str("outcome_map"));
  s.oracle_y0 = cfg.str("oracle_y0", s.oracle_y0);
  s.oracle_y1 = cfg.str("oracle_y1", s.oracle_y1);
  return s;
}

inline DatasetSchema rhc_default_schema() {
  DatasetSchema s;
  s.outcome = "dth30";
  s.treatment = "swang1";
  s.covariates = rhc_default_covariates();
  s.categorical = rhc_default_categorical();
  s.treatment_map = {{"RHC", 1.0}, {"No RHC", 0.0}};
  s.outcome_map = {{"Yes", 1.0}, {"No", 0.0}};
  return s;
}

// Columns scaled to mean 0 and unit variance (constant columns are centered only).
inline Matrix standardize(const Matrix& z) {
  Matrix out = z;
  for (Eigen::Index k = 0; k < z.cols(); ++k) {
    const double mean = z.col(k).mean();
    const double sd = std::sqrt((z.col(k).array() - mean).square().sum() / std::max<double>(1.0, z.rows() - 1.0));
    out.col(k).array() -= mean;
    if (sd > 0.0) out.col(k) /= sd;
  }
  return out;
}

// Margin pipeline over a sigma^2 sweep, followed by a pruned tree explaining
// margin membership.
inline StudyReport run_rhc_analysis(const RunConfig& cfg) {
  require(cfg.has("data"), ErrorKind::invalid_config, "the rhc task needs `data = <path to the RHC csv>`");
  StudyReport report = StudyReport::for_config("rhc", cfg);
  const ObservationalDataset raw = load_dataset(cfg.str("data"), schema_from(cfg, rhc_default_schema()));
  ObservationalDataset data = raw;
  data.z = standardize(raw.z);

  const std::size_t n = data.size(), treated = data.treated();
  report.sections["counts"] = {{"n", n},
                               {"treated", treated},
                               {"control", n - treated},
                               {"expected_n", kRhcExpectedRows},
                               {"expected_treated", kRhcExpectedTreated},
                               {"counts_match", n == kRhcExpectedRows && treated == kRhcExpectedTreated}};
  report.sections["covariates"] = data.covariate_names;

  std::vector<double> sweep = cfg.numbers("sigma2_sweep");
  const double p = static_cast<double>(data.z.cols());
  if (sweep.empty()) sweep = {p / 2.0, p, 2.0 * p};
  const double lambda = cfg.num("lambda", 0.5);
  const double threshold = cfg.num("threshold", 1.0);
  const std::size_t n_boot = cfg.count("bootstrap", 0);
  const double tree_sigma2 = cfg.num("sigma2", sweep[sweep.size() / 2]);
  const double cc = cfg.num("cc", 0.1);

  Json sweep_rows = Json::array();
  bool all_positive = true;
  std::optional<MarginSet> tree_margin;
  for (std::size_t k = 0; k < sweep.size(); ++k) {
    MarginPipelineOptions o;
    o.kernel = KernelSpec::gaussian(sweep[k]);
    o.lambda = lambda;
    o.threshold = threshold;
    o.svm.tol = cfg.num("svm_tol", o.svm.tol);
    const MarginPipelineResult r = n_boot > 0 ? margin_ace_with_bootstrap(data, o, n_boot, cfg.seed() + k)
                                              : margin_ace_pipeline(data, o);
    CausalReport cr = r.report;
    cr.config_hash = report.config_hash;
    all_positive = all_positive && cr.estimate > 0.0;
    std::size_t treated_in_margin = 0;
    for (auto i : r.margin.indices) treated_in_margin += data.t[i];
    sweep_rows.push_back({{"sigma2", number(sweep[k])},
                          {"margin_size", r.margin.indices.size()},
                          {"treated_in_margin", treated_in_margin},
                          {"estimate", number(cr.estimate)},
                          {"se", number(cr.se)},
                          {"support_vectors", r.svm.support.size()}});
    report.estimates.push_back(cr);
    if (sweep[k] == tree_sigma2 || (!tree_margin && k + 1 == sweep.size())) tree_margin = r.margin;
  }
  report.sections["sweep"] = sweep_rows;
  report.sections["all_estimates_positive"] = all_positive;
  report.sections["published_reference"] = {
      {"margin_size", kRhcReferenceMargin}, {"estimate", kRhcReferenceAce}, {"se", kRhcReferenceSe}};

  // The tree works on the unstandardized covariates so thresholds read in
  // original units.
  const OverlapLabels labels = overlap_labels(*tree_margin, n);
  if (labels.positives() > 0 && labels.positives() < n) {
    const Tree pruned = prune_tree(fit_tree(raw.z, labels), cc);
    report.tree_outline = render_tree(pruned, raw.covariate_names);
    report.sections["tree"] = tree_json(pruned, raw.covariate_names);
  } else {
    report.notes.push_back("margin membership is constant; no tree was fitted");
  }
  report.sections["tree_cc"] = number(cc);
  report.notes.push_back("covariates are standardized before the SVM fit; the tree uses original units");
  return report;
}

}  // namespace overlap
