#pragma once

// Report assembly and deterministic serialization. JSON objects have sorted
// keys and doubles print in shortest round-trip form; non-finite values are
// written as the strings "Infinity", "-Infinity" and "NaN".

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "overlap/config.hpp"
#include "overlap/divergence.hpp"
#include "overlap/error.hpp"
#include "overlap/estimators.hpp"
#include "overlap/propensity.hpp"
#include "overlap/spectral.hpp"
#include "overlap/svm.hpp"
#include "overlap/tree.hpp"

#ifndef OVERLAP_VERSION
#define OVERLAP_VERSION "0.1.0"
#endif

namespace overlap {

using Json = nlohmann::json;

inline constexpr const char* kVersion = OVERLAP_VERSION;

inline Json number(double v) {
  if (std::isnan(v)) return "NaN";
  if (std::isinf(v)) return v > 0 ? "Infinity" : "-Infinity";
  return v;
}

inline double number_from(const Json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "NaN") return std::numeric_limits<double>::quiet_NaN();
    if (s == "Infinity") return std::numeric_limits<double>::infinity();
    if (s == "-Infinity") return -std::numeric_limits<double>::infinity();
    fail(ErrorKind::parse_error, "expected a number, got '" + s + "'");
  }
  require(j.is_number(), ErrorKind::parse_error, "expected a number");
  return j.get<double>();
}

template <typename Seq>
Json numbers(const Seq& values) {
  Json out = Json::array();
  for (double v : values) out.push_back(number(v));
  return out;
}

inline Json numbers(const Vector& v) { return numbers(std::vector<double>(v.data(), v.data() + v.size())); }

inline Json to_json(const DivergenceResult& r) {
  Json j{{"L", number(r.L)},
         {"D2", number(r.D2)},
         {"bhattacharyya_distance", number(r.bhat_distance)},
         {"bhattacharyya_coefficient", number(r.bhat_coefficient)}};
  j["J"] = r.J ? number(*r.J) : Json(nullptr);
  return j;
}

inline Json to_json(const PhaseTransitionReport& r) {
  return {{"partial_sums", numbers(r.partial_sums)},
          {"growth_ratio", number(r.growth_ratio)},
          {"total", number(r.total())},
          {"noise_floor", number(r.noise_floor)},
          {"verdict", to_string(r.verdict)}};
}

inline Json to_json(const CausalReport& r) {
  return {{"estimand", to_string(r.estimand)},
          {"method", r.method},
          {"estimate", number(r.estimate)},
          {"se", number(r.se)},
          {"se_kind", r.se_kind},
          {"n_subpop", r.n_subpop},
          {"n_treated", r.n_treated},
          {"n_control", r.n_control},
          {"region", r.region},
          {"region_value", number(r.region_value)},
          {"high_weight", r.high_weight},
          {"bootstrap_ok", r.bootstrap_ok},
          {"bootstrap_failed", r.bootstrap_failed},
          {"config_hash", r.config_hash}};
}

inline CausalReport causal_report_from_json(const Json& j) {
  CausalReport r;
  const auto estimand = j.at("estimand").get<std::string>();
  if (estimand == "ace") {
    r.estimand = Estimand::ace;
  } else if (estimand == "ace_region") {
    r.estimand = Estimand::ace_region;
  } else if (estimand == "ace_margin") {
    r.estimand = Estimand::ace_margin;
  } else {
    fail(ErrorKind::parse_error, "unknown estimand '" + estimand + "'");
  }
  r.method = j.at("method").get<std::string>();
  r.estimate = number_from(j.at("estimate"));
  r.se = number_from(j.at("se"));
  r.se_kind = j.at("se_kind").get<std::string>();
  r.n_subpop = j.at("n_subpop").get<std::size_t>();
  r.n_treated = j.at("n_treated").get<std::size_t>();
  r.n_control = j.at("n_control").get<std::size_t>();
  r.region = j.at("region").get<std::string>();
  r.region_value = number_from(j.at("region_value"));
  r.high_weight = j.at("high_weight").get<bool>();
  r.bootstrap_ok = j.at("bootstrap_ok").get<std::size_t>();
  r.bootstrap_failed = j.at("bootstrap_failed").get<std::size_t>();
  r.config_hash = j.at("config_hash").get<std::string>();
  return r;
}

inline Json kernel_json(const KernelSpec& k) {
  Json j{{"kind", to_string(k.kind)}};
  if (k.kind == KernelKind::gaussian) j["sigma2"] = number(k.sigma2);
  if (k.kind == KernelKind::user_matrix) j["size"] = k.matrix.rows();
  return j;
}

inline Json to_json(const PropensityFit& fit, const std::vector<std::string>& names = {}) {
  Json j{{"kind", to_string(fit.kind)}};
  if (fit.kind == ModelKind::logistic) {
    Json coef = Json::object();
    coef["(intercept)"] = number(fit.coefficients(0));
    for (Eigen::Index k = 1; k < fit.coefficients.size(); ++k)
      coef[detail::covariate_name(names, static_cast<int>(k - 1))] = number(fit.coefficients(k));
    j["coefficients"] = coef;
    j["iterations"] = fit.iterations;
    j["log_likelihood_trace"] = numbers(fit.log_likelihood_trace);
  } else {
    j["support"] = fit.support;
    j["dual"] = numbers(fit.support_coef);  // alpha_i y_i of the support units
    j["bias"] = number(fit.bias);
    j["lambda"] = number(fit.lambda);
    j["box"] = number(fit.box);
    j["tol"] = number(fit.tol);
    j["solver_iterations"] = fit.solver_iterations;
    j["kernel"] = kernel_json(fit.kernel);
  }
  return j;
}

inline Json to_json(const TrimmingRegion& r) {
  const std::size_t kept = r.retained();
  return {{"c_star", number(r.c_star)},
          {"retained", kept},
          {"excluded", r.member.size() - kept},
          {"n", r.member.size()},
          {"degenerate", r.degenerate}};
}

inline Json to_json(const MarginSet& m, std::size_t n) {
  return {{"threshold", number(m.threshold)}, {"size", m.indices.size()}, {"excluded", n - m.indices.size()}, {"n", n}};
}

inline Json tree_json(const Tree& tree, const std::vector<std::string>& names, int id = -1) {
  if (id < 0) id = tree.root;
  const TreeNode& n = tree.nodes[static_cast<std::size_t>(id)];
  Json j{{"n", n.n()}, {"out", n.count_out}, {"in", n.count_in}};
  if (n.is_leaf()) {
    j["leaf"] = true;
    j["label"] = n.label() ? "in" : "out";
  } else {
    j["leaf"] = false;
    j["feature"] = detail::covariate_name(names, n.feature);
    j["feature_index"] = n.feature;
    j["threshold"] = number(n.threshold);
    j["left"] = tree_json(tree, names, n.left);
    j["right"] = tree_json(tree, names, n.right);
  }
  return j;
}

struct StudyReport {
  std::string task;
  std::string version = kVersion;
  std::map<std::string, std::string> config;
  std::string config_hash;
  std::uint64_t seed = kDefaultSeed;
  std::vector<CausalReport> estimates;
  std::optional<DivergenceResult> divergence;
  std::optional<PhaseTransitionReport> phase_transition;
  std::string tree_outline;
  Json sections = Json::object();  // task-specific payload: models, counts, curves
  std::vector<std::string> notes;

  static StudyReport for_config(const std::string& task, const RunConfig& cfg) {
    StudyReport r;
    r.task = task;
    r.config = cfg.values();
    r.config_hash = cfg.hash();
    r.seed = cfg.seed();
    return r;
  }
};

inline Json to_json(const StudyReport& r) {
  Json j{{"task", r.task}, {"version", r.version}, {"config", r.config}, {"config_hash", r.config_hash},
         {"seed", r.seed}};
  Json est = Json::array();
  for (const auto& e : r.estimates) est.push_back(to_json(e));
  j["estimates"] = est;
  j["divergence"] = r.divergence ? to_json(*r.divergence) : Json(nullptr);
  j["phase_transition"] = r.phase_transition ? to_json(*r.phase_transition) : Json(nullptr);
  j["tree_outline"] = r.tree_outline;
  j["sections"] = r.sections;
  j["notes"] = r.notes;
  return j;
}

inline std::string render_json(const StudyReport& r) { return to_json(r).dump(2) + "\n"; }

namespace detail {

inline std::string fixed(double v, int digits = 6) {
  if (!std::isfinite(v)) return std::isnan(v) ? "NaN" : (v > 0 ? "Infinity" : "-Infinity");
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace detail

inline std::string render_markdown(const StudyReport& r) {
  std::ostringstream md;
  md << "# overlap-lab report: " << r.task << "\n\n";
  md << "- version: " << r.version << "\n- config hash: `" << r.config_hash << "`\n- seed: " << r.seed << "\n\n";
  if (!r.estimates.empty()) {
    md << "## Causal estimates\n\n";
    md << "| estimand | method | region | n_subpop | treated | control | estimate | SE | SE kind |\n";
    md << "|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& e : r.estimates) {
      md << "| " << to_string(e.estimand) << " | " << e.method << " | " << e.region << " | " << e.n_subpop << " | "
         << e.n_treated << " | " << e.n_control << " | " << detail::fixed(e.estimate) << " | " << detail::fixed(e.se)
         << " | " << e.se_kind << " |\n";
    }
    md << "\n";
    for (const auto& e : r.estimates)
      if (e.high_weight) md << "Warning: some inverse-probability weights exceed " << kHighWeight << ".\n";
  }
  if (r.divergence) {
    const auto& d = *r.divergence;
    md << "## Divergence\n\n";
    md << "- L: " << detail::fixed(d.L) << "\n- D2: " << detail::fixed(d.D2)
       << "\n- Bhattacharyya distance: " << detail::fixed(d.bhat_distance)
       << "\n- Bhattacharyya coefficient: " << detail::fixed(d.bhat_coefficient, 8) << "\n";
    if (d.J) md << "- J: " << detail::fixed(*d.J) << "\n";
    md << "\n";
  }
  if (r.phase_transition) {
    const auto& p = *r.phase_transition;
    md << "## Phase transition\n\n- terms: " << p.partial_sums.size() << "\n- partial sum: " << detail::fixed(p.total())
       << "\n- growth ratio: " << detail::fixed(p.growth_ratio) << "\n- verdict: " << to_string(p.verdict) << "\n\n";
  }
  if (!r.tree_outline.empty()) md << "## Overlap region tree\n\n```\n" << r.tree_outline << "```\n\n";
  if (!r.notes.empty()) {
    md << "## Notes\n\n";
    for (const auto& n : r.notes) md << "- " << n << "\n";
    md << "\n";
  }
  if (!r.config.empty()) {
    md << "## Configuration\n\n```\n";
    for (const auto& [k, v] : r.config) md << k << " = " << v << "\n";
    md << "```\n";
  }
  return md.str();
}

enum class ReportFormat { json, markdown };

inline void emit_report(const StudyReport& r, const std::string& path, ReportFormat format) {
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorKind::io_error, "cannot write report '" + path + "'");
  out << (format == ReportFormat::json ? render_json(r) : render_markdown(r));
  out.flush();
  require(static_cast<bool>(out), ErrorKind::io_error, "write to '" + path + "' failed");
}

}  // namespace overlap
