// overlap-lab: command-line front end for overlap diagnostics and
// overlap-robust causal effect estimation.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "overlap/overlap.hpp"

namespace fs = std::filesystem;
using namespace overlap;

namespace {

struct Common {
  std::string config;
  std::optional<long> seed;
  std::string out = ".";
  std::string data;
  std::string mercer_spec;
  std::optional<double> eps_b, cap_j, sigma2, lambda, threshold, cc;
  std::string method, subpop;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "key = value configuration file");
  app->add_option("--seed", c.seed, "random seed (overrides the config)");
  app->add_option("--out", c.out, "output directory");
  app->add_option("--data", c.data, "input CSV (overrides `data` in the config)");
}

RunConfig effective_config(const Common& c) {
  RunConfig cfg = c.config.empty() ? RunConfig{} : RunConfig::load(c.config);
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) cfg.set(key, detail::format_double(*v));
  };
  if (c.seed) cfg.set("seed", std::to_string(*c.seed));
  if (!c.data.empty()) cfg.set("data", c.data);
  if (!c.mercer_spec.empty()) cfg.set("mercer_spec", c.mercer_spec);
  if (!c.method.empty()) cfg.set("method", c.method);
  if (!c.subpop.empty()) cfg.set("subpop", c.subpop);
  put("eps_b", c.eps_b);
  put("cap_j", c.cap_j);
  put("sigma2", c.sigma2);
  put("lambda", c.lambda);
  put("threshold", c.threshold);
  put("cc", c.cc);
  return cfg;
}

fs::path prepare_out(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::io_error, "cannot create output directory '" + dir + "': " + ec.message());
  return fs::path(dir);
}

void write_outputs(const StudyReport& r, const fs::path& out) {
  emit_report(r, (out / "report.json").string(), ReportFormat::json);
  emit_report(r, (out / "report.md").string(), ReportFormat::markdown);
}

ObservationalDataset load_tall(const RunConfig& cfg) {
  require(cfg.has("data"), ErrorKind::invalid_config, "no dataset: set `data` in the config or pass --data");
  return load_dataset(cfg.str("data"), schema_from(cfg));
}

KernelSpec kernel_from(const RunConfig& cfg) {
  const std::string kind = cfg.str("kernel", "gaussian");
  if (kind == "linear") return KernelSpec::linear();
  require(kind == "gaussian", ErrorKind::invalid_config, "kernel must be gaussian or linear");
  KernelSpec k = KernelSpec::gaussian(cfg.num("sigma2", 1.0));
  k.validate();
  return k;
}

LogisticOptions logistic_from(const RunConfig&) { return {}; }

SvmOptions svm_from(const RunConfig& cfg) {
  SvmOptions o;
  o.tol = cfg.num("svm_tol", o.tol);
  return o;
}

void add_data_summary(StudyReport& r, const ObservationalDataset& d) {
  r.sections["data"] = {{"n", d.size()},
                        {"treated", d.treated()},
                        {"control", d.size() - d.treated()},
                        {"covariates", d.covariate_names},
                        {"has_oracle", d.has_oracle()}};
}

// ---------------------------------------------------------------------------

void run_simulate(const RunConfig& cfg, const fs::path& out) {
  const std::string scenario = cfg.str("scenario", "phase-transition");
  if (scenario == "phase-transition") {
    const PhaseStudyResult study = run_phase_transition_study(cfg);
    std::ofstream curves(out / "curves.csv");
    require(static_cast<bool>(curves), ErrorKind::io_error, "cannot write curves.csv");
    write_curves_csv(curves, study.curve);
    write_outputs(study.report, out);
    return;
  }
  require(scenario == "confounded" || scenario == "randomized", ErrorKind::invalid_config,
          "scenario must be phase-transition, confounded or randomized");
  const SimulatedStudy sim = simulate_confounded(confounded_options_from(cfg), cfg.seed());
  save_dataset((out / "dataset.csv").string(), sim.data);
  StudyReport r = StudyReport::for_config("simulate", cfg);
  add_data_summary(r, sim.data);
  r.sections["oracle_ace"] = number(ace_oracle(sim.data, std::vector<bool>(sim.data.size(), true)));
  r.sections["true_scores"] = {{"min", number(*std::min_element(sim.true_scores.begin(), sim.true_scores.end()))},
                               {"max", number(*std::max_element(sim.true_scores.begin(), sim.true_scores.end()))}};
  write_outputs(r, out);
}

void run_diagnose_divergence(const RunConfig& cfg, const fs::path& out) {
  StudyReport r = StudyReport::for_config("diagnose divergence", cfg);
  DichotomyThresholds th;
  th.eps_b = cfg.num("eps_b", th.eps_b);
  th.cap_j = cfg.num("cap_j", th.cap_j);
  require(th.eps_b >= 0.0 && th.cap_j > 0.0, ErrorKind::invalid_config, "eps_b must be >= 0 and cap_j > 0");
  GaussianMeasurePair pair;
  if (cfg.has("data")) {
    const FunctionalSampleSet s = load_functional(cfg.str("data"), cfg.str("group_column", "group"));
    // Group-specific moments; a singular group covariance reads as L = infinity.
    const GaussianMeasurePair pooled = empirical_gaussian_pair(s);
    pair.mean0 = pooled.mean0;
    pair.mean1 = pooled.mean1;
    for (int g : {0, 1}) {
      Matrix rows(static_cast<Eigen::Index>(s.count(g)), s.values.cols());
      Eigen::Index k = 0;
      for (Eigen::Index i = 0; i < s.values.rows(); ++i)
        if (s.group[static_cast<std::size_t>(i)] == g) rows.row(k++) = s.values.row(i);
      const Matrix centered = rows.rowwise() - rows.colwise().mean();
      (g == 0 ? pair.cov0 : pair.cov1) = centered.transpose() * centered / static_cast<double>(rows.rows() - 1);
    }
    r.sections["data"] = {{"paths", s.samples()}, {"grid", s.grid.size()}, {"group0", s.count(0)},
                          {"group1", s.count(1)}};
  } else {
    require(cfg.has("mercer_spec"), ErrorKind::invalid_config,
            "diagnose divergence needs a wide-format `data` file or --mercer-spec");
    const MercerSpec spec = read_mercer_spec(cfg.str("mercer_spec"));
    const Matrix cov = spec.covariance();
    pair = {Vector::Zero(static_cast<Eigen::Index>(spec.grid().size())), spec.mean_function(), cov, cov};
  }
  const DivergenceResult d = divergence_report(pair);
  r.divergence = d;
  r.sections["verdict"] = to_string(dichotomy_verdict(d, th));
  r.sections["thresholds"] = {{"eps_b", number(th.eps_b)}, {"cap_j", number(th.cap_j)}};
  write_outputs(r, out);
}

void run_diagnose_phase(const RunConfig& cfg, const fs::path& out) {
  StudyReport r = StudyReport::for_config("diagnose phase-transition", cfg);
  VerdictThresholds th;
  th.growth_threshold = cfg.num("growth_threshold", th.growth_threshold);
  th.plausible_ratio = cfg.num("plausible_ratio", th.plausible_ratio);
  PhaseTransitionReport p;
  if (cfg.has("mercer_spec") && !cfg.has("data")) {
    const MercerSpec spec = read_mercer_spec(cfg.str("mercer_spec"));
    const auto& c = spec.eigenvalues();
    const auto& a = spec.mean_coeffs();
    p = phase_transition_statistic(std::vector<double>(c.data(), c.data() + c.size()),
                                   std::vector<double>(a.data(), a.data() + a.size()));
    r.sections["source"] = "mercer-spec";
  } else {
    require(cfg.has("data"), ErrorKind::invalid_config,
            "diagnose phase-transition needs a wide-format `data` file or --mercer-spec");
    const FunctionalSampleSet s = load_functional(cfg.str("data"), cfg.str("group_column", "group"));
    SpectralOptions so;
    so.relative_ridge = cfg.num("relative_ridge", so.relative_ridge);
    const std::size_t J = cfg.count("terms", std::min<std::size_t>(20, s.grid.size()));
    const SpectralEstimate est = project_mean_difference(s, empirical_eigendecomposition(s, J, so));
    p = phase_transition_statistic(est);
    r.sections["source"] = "samples";
    r.sections["spectral"] = {{"eigenvalues", numbers(est.eigenvalues)},
                              {"mean_coeffs", numbers(est.mean_coeffs)},
                              {"floor", number(est.floor)}};
  }
  p.verdict = overlap_verdict(p, th);
  r.phase_transition = p;
  write_outputs(r, out);
}

void run_fit(const std::string& model, const RunConfig& cfg, const fs::path& out) {
  const ObservationalDataset d = load_tall(cfg);
  StudyReport r = StudyReport::for_config("fit " + model, cfg);
  add_data_summary(r, d);
  Json model_json;
  if (model == "logistic") {
    const PropensityFit fit = fit_logistic(d, logistic_from(cfg));
    model_json = to_json(fit, d.covariate_names);
    model_json["score_range"] = {number(*std::min_element(fit.scores.begin(), fit.scores.end())),
                                 number(*std::max_element(fit.scores.begin(), fit.scores.end()))};
  } else {
    const PropensityFit fit = fit_kernel_svm(d, kernel_from(cfg), cfg.num("lambda", 0.5), svm_from(cfg));
    model_json = to_json(fit, d.covariate_names);
    model_json["kkt_residual"] = number(svm_kkt_residual(fit, gram_matrix(fit.kernel, d.z), d.t));
  }
  r.sections["model"] = model_json;
  std::ofstream mj(out / "model.json");
  require(static_cast<bool>(mj), ErrorKind::io_error, "cannot write model.json");
  mj << model_json.dump(2) << "\n";
  write_outputs(r, out);
}

void run_trim(const RunConfig& cfg, const fs::path& out) {
  const ObservationalDataset d = load_tall(cfg);
  StudyReport r = StudyReport::for_config("trim crump", cfg);
  add_data_summary(r, d);
  const PropensityFit fit = fit_logistic(d, logistic_from(cfg));
  const TrimmingRegion region = crump_region(fit.scores, cfg.num("trim_step", 0.001));
  r.sections["region"] = to_json(region);
  if (region.degenerate) r.notes.push_back("no trimming cutoff satisfied the variance rule; largest nonempty cutoff used");
  write_outputs(r, out);
}

void run_margin(const RunConfig& cfg, const fs::path& out) {
  const ObservationalDataset d = load_tall(cfg);
  StudyReport r = StudyReport::for_config("margin", cfg);
  add_data_summary(r, d);
  const PropensityFit fit = fit_kernel_svm(d, kernel_from(cfg), cfg.num("lambda", 0.5), svm_from(cfg));
  const MarginSet m = margin_set(fit, cfg.num("threshold", 1.0));
  r.sections["margin"] = to_json(m, d.size());
  r.sections["margin"]["indices"] = m.indices;
  write_outputs(r, out);
}

void run_estimate(const RunConfig& cfg, const fs::path& out) {
  const ObservationalDataset d = load_tall(cfg);
  StudyReport r = StudyReport::for_config("estimate", cfg);
  add_data_summary(r, d);
  const std::string method = cfg.str("method", "dim");
  const std::string subpop = cfg.str("subpop", "all");
  require(method == "dim" || method == "ipw", ErrorKind::invalid_config, "method must be dim or ipw");
  const EstimatorKind kind = method == "dim" ? EstimatorKind::dim : EstimatorKind::ipw;
  const bool stabilized = cfg.flag("stabilized", true);
  const std::size_t n_boot = cfg.count("bootstrap", 0);

  CausalReport est;
  std::vector<bool> member(d.size(), true);
  if (subpop == "margin") {
    MarginPipelineOptions o;
    o.kernel = kernel_from(cfg);
    o.lambda = cfg.num("lambda", 0.5);
    o.threshold = cfg.num("threshold", 1.0);
    o.estimator = kind;
    o.svm = svm_from(cfg);
    const MarginPipelineResult res =
        n_boot > 0 ? margin_ace_with_bootstrap(d, o, n_boot, cfg.seed()) : margin_ace_pipeline(d, o);
    est = res.report;
    member = res.margin.flags(d.size());
    r.sections["margin"] = to_json(res.margin, d.size());
  } else {
    require(subpop == "all" || subpop == "crump", ErrorKind::invalid_config, "subpop must be all, crump or margin");
    std::vector<double> scores;
    if (kind == EstimatorKind::ipw || subpop == "crump") scores = fit_logistic(d, logistic_from(cfg)).scores;
    double c_star = 0.0;
    if (subpop == "crump") {
      const TrimmingRegion region = crump_region(scores, cfg.num("trim_step", 0.001));
      member = region.member;
      c_star = region.c_star;
      r.sections["region"] = to_json(region);
    }
    auto estimate_on = [&](const ObservationalDataset& data, const std::vector<bool>& m,
                           const std::vector<double>& s) {
      return kind == EstimatorKind::dim ? ace_difference_in_means(data, m) : ace_ipw(data, s, m, stabilized);
    };
    est = estimate_on(d, member, scores);
    if (subpop == "crump") {
      est.estimand = Estimand::ace_region;
      est.region = "crump c*=" + detail::format_double(c_star);
      est.region_value = c_star;
    } else {
      est.region = "all";
    }
    if (n_boot > 0) {
      // The full procedure (score model and region) is refitted per resample.
      const BootstrapResult boot = bootstrap_se(
          [&](const ObservationalDataset& b) {
            std::vector<double> s;
            std::vector<bool> m(b.size(), true);
            if (kind == EstimatorKind::ipw || subpop == "crump") s = fit_logistic(b, logistic_from(cfg)).scores;
            if (subpop == "crump") m = crump_region(s, cfg.num("trim_step", 0.001)).member;
            return estimate_on(b, m, s).estimate;
          },
          d, n_boot, cfg.seed());
      est.se = boot.se;
      est.se_kind = "bootstrap";
      est.bootstrap_ok = boot.ok;
      est.bootstrap_failed = boot.failed;
    }
  }
  est.config_hash = r.config_hash;
  if (d.has_oracle()) r.sections["oracle_ace"] = number(ace_oracle(d, member));
  r.estimates.push_back(est);
  if (est.high_weight) r.notes.push_back("some inverse-probability weights exceed " + detail::format_double(kHighWeight));
  write_outputs(r, out);
}

void run_explain(const RunConfig& cfg, const fs::path& out) {
  const ObservationalDataset d = load_tall(cfg);
  StudyReport r = StudyReport::for_config("explain", cfg);
  add_data_summary(r, d);
  const std::string subpop = cfg.str("subpop", "crump");
  OverlapLabels labels;
  if (subpop == "margin") {
    const PropensityFit fit = fit_kernel_svm(d, kernel_from(cfg), cfg.num("lambda", 0.5), svm_from(cfg));
    labels = overlap_labels(margin_set(fit, cfg.num("threshold", 1.0)), d.size());
  } else {
    require(subpop == "crump", ErrorKind::invalid_config, "explain labels come from crump or margin");
    labels = overlap_labels(crump_region(fit_logistic(d, logistic_from(cfg)).scores, cfg.num("trim_step", 0.001)));
  }
  TreeOptions to;
  to.max_depth = cfg.count("max_depth", to.max_depth);
  to.min_leaf = cfg.count("min_leaf", to.min_leaf);
  const Tree full = fit_tree(d.z, labels, to);
  const Tree pruned = prune_tree(full, cfg.num("cc", 0.0));
  r.tree_outline = render_tree(pruned, d.covariate_names);
  r.sections["tree"] = tree_json(pruned, d.covariate_names);
  r.sections["labels"] = {{"in", labels.positives()}, {"out", labels.size() - labels.positives()}, {"source", subpop}};
  r.sections["training_errors"] = training_errors(pruned, d.z, labels);
  r.sections["nodes"] = {{"full", full.nodes.size()}, {"pruned", pruned.nodes.size()}};
  std::ofstream outline(out / "tree.txt");
  require(static_cast<bool>(outline), ErrorKind::io_error, "cannot write tree.txt");
  outline << r.tree_outline;
  write_outputs(r, out);
}

void run_rhc(const RunConfig& cfg, const fs::path& out) { write_outputs(run_rhc_analysis(cfg), out); }

void report_error(ErrorKind kind, const std::string& message) {
  const Json j{{"error", {{"category", std::string(to_string(kind))}, {"message", message}, {"exit_code", exit_code(kind)}}}};
  std::cerr << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"overlap-lab: covariate overlap diagnostics and overlap-robust causal estimation"};
  app.require_subcommand(1);
  Common c;

  auto* simulate = app.add_subcommand("simulate", "simulation studies (phase transition, confounded data)");
  add_common(simulate, c);

  auto* diagnose = app.add_subcommand("diagnose", "Gaussian-measure overlap diagnostics");
  diagnose->require_subcommand(1);
  auto* divergence = diagnose->add_subcommand("divergence", "Bhattacharyya and Jeffreys divergences");
  add_common(divergence, c);
  divergence->add_option("--eps-b", c.eps_b, "coefficient at or below which the measures read as orthogonal");
  divergence->add_option("--cap-j", c.cap_j, "J at or above which the measures read as orthogonal");
  divergence->add_option("--mercer-spec", c.mercer_spec, "Mercer spec file");
  auto* phase = diagnose->add_subcommand("phase-transition", "partial sums of a_j^2 / c_j");
  add_common(phase, c);
  phase->add_option("--mercer-spec", c.mercer_spec, "Mercer spec file");

  auto* fit = app.add_subcommand("fit", "propensity models");
  fit->require_subcommand(1);
  auto* fit_logit = fit->add_subcommand("logistic", "logistic regression");
  add_common(fit_logit, c);
  auto* fit_svm = fit->add_subcommand("svm", "kernel SVM");
  add_common(fit_svm, c);
  fit_svm->add_option("--sigma2", c.sigma2, "gaussian kernel scale");
  fit_svm->add_option("--lambda", c.lambda, "regularization");

  auto* trim = app.add_subcommand("trim", "propensity trimming");
  trim->require_subcommand(1);
  auto* crump = trim->add_subcommand("crump", "variance-minimizing cutoff");
  add_common(crump, c);

  auto* margin = app.add_subcommand("margin", "SVM margin set");
  add_common(margin, c);
  margin->add_option("--threshold", c.threshold, "|f| cutoff");
  margin->add_option("--sigma2", c.sigma2, "gaussian kernel scale");
  margin->add_option("--lambda", c.lambda, "regularization");

  auto* estimate = app.add_subcommand("estimate", "average causal effects");
  add_common(estimate, c);
  estimate->add_option("--method", c.method, "dim or ipw")->check(CLI::IsMember({"dim", "ipw"}));
  estimate->add_option("--subpop", c.subpop, "all, crump or margin")->check(CLI::IsMember({"all", "crump", "margin"}));
  estimate->add_option("--threshold", c.threshold, "margin |f| cutoff");
  estimate->add_option("--sigma2", c.sigma2, "gaussian kernel scale");
  estimate->add_option("--lambda", c.lambda, "regularization");

  auto* explain = app.add_subcommand("explain", "tree explanation of the overlap region");
  add_common(explain, c);
  explain->add_option("--cc", c.cc, "cost-complexity parameter");
  explain->add_option("--subpop", c.subpop, "crump or margin")->check(CLI::IsMember({"crump", "margin"}));

  auto* rhc = app.add_subcommand("rhc", "right heart catheterization analysis");
  add_common(rhc, c);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    if (code != 0) report_error(ErrorKind::invalid_config, e.what());
    return code == 0 ? 0 : exit_code(ErrorKind::invalid_config);
  }

  try {
    const RunConfig cfg = effective_config(c);
    const fs::path out = prepare_out(c.out);
    if (simulate->parsed()) run_simulate(cfg, out);
    else if (divergence->parsed()) run_diagnose_divergence(cfg, out);
    else if (phase->parsed()) run_diagnose_phase(cfg, out);
    else if (fit_logit->parsed()) run_fit("logistic", cfg, out);
    else if (fit_svm->parsed()) run_fit("svm", cfg, out);
    else if (crump->parsed()) run_trim(cfg, out);
    else if (margin->parsed()) run_margin(cfg, out);
    else if (estimate->parsed()) run_estimate(cfg, out);
    else if (explain->parsed()) run_explain(cfg, out);
    else if (rhc->parsed()) run_rhc(cfg, out);
  } catch (const Error& e) {
    report_error(e.kind(), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    report_error(ErrorKind::io_error, e.what());
    return exit_code(ErrorKind::io_error);
  }
  return 0;
}
