#pragma once

// Run configuration: a flat `key = value` file. `#` starts a comment, a
// `[section]` line prefixes the keys below it with `section.`, values may be
// double-quoted, and lists are comma separated (optionally in brackets).

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "overlap/error.hpp"
#include "overlap/mercer_io.hpp"

namespace overlap {

inline constexpr std::uint64_t kDefaultSeed = 20240521;

namespace detail {

inline std::string unquote(std::string v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  return v;
}

inline std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "task", "data", "outcome", "treatment", "covariates", "categorical", "treatment_map", "outcome_map",
      "oracle_y0", "oracle_y1", "functional", "group_column", "kernel", "sigma2", "sigma2_sweep", "lambda",
      "threshold", "trim_step", "bootstrap", "seed", "method", "subpop", "model", "stabilized", "cc", "max_depth",
      "min_leaf", "eps_b", "cap_j", "mercer_spec", "terms", "relative_ridge", "growth_threshold",
      "plausible_ratio", "n", "n_per_group", "noise_sd", "sim_terms", "grids", "holdout_sigma2", "holdout_lambda",
      "scenario", "extreme_fraction", "effect", "p", "divergence", "svm_tol", "noise_multiple"};
  return keys;
}

}  // namespace detail

class RunConfig {
 public:
  RunConfig() = default;

  static RunConfig parse(std::istream& in, const std::string& origin = "config") {
    RunConfig cfg;
    std::string raw, section;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
      ++line_no;
      const std::string line = detail::trim(detail::strip_comment(raw));
      if (line.empty()) continue;
      auto where = [&] { return origin + " line " + std::to_string(line_no) + ": "; };
      if (line.front() == '[') {
        require(line.back() == ']', ErrorKind::parse_error, where() + "unterminated section header");
        section = detail::trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      require(eq != std::string::npos, ErrorKind::parse_error, where() + "expected key = value");
      std::string key = detail::trim(line.substr(0, eq));
      require(!key.empty(), ErrorKind::parse_error, where() + "empty key");
      if (!section.empty()) key = section + "." + key;
      cfg.set(key, detail::unquote(detail::trim(line.substr(eq + 1))));
    }
    return cfg;
  }

  static RunConfig load(const std::string& path) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorKind::io_error, "cannot open config '" + path + "'");
    return parse(in, path);
  }

  void set(const std::string& key, const std::string& value) {
    const auto dot = key.rfind('.');
    const std::string leaf = dot == std::string::npos ? key : key.substr(dot + 1);
    require(detail::known_keys().count(leaf) > 0, ErrorKind::invalid_config, "unknown config key '" + key + "'");
    values_[key] = value;
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string str(const std::string& key, const std::string& fallback = {}) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double num(const std::string& key, double fallback) const {
    if (!has(key)) return fallback;
    double v = 0.0;
    require(detail::parse_double(str(key), v), ErrorKind::invalid_config,
            "config key '" + key + "' is not a number: '" + str(key) + "'");
    return v;
  }

  long integer(const std::string& key, long fallback) const {
    if (!has(key)) return fallback;
    const std::string s = str(key);
    std::size_t used = 0;
    long v = 0;
    try {
      v = std::stol(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(used == s.size() && !s.empty(), ErrorKind::invalid_config,
            "config key '" + key + "' is not an integer: '" + s + "'");
    return v;
  }

  std::size_t count(const std::string& key, std::size_t fallback) const {
    const long v = integer(key, static_cast<long>(fallback));
    require(v >= 0, ErrorKind::invalid_config, "config key '" + key + "' must be nonnegative");
    return static_cast<std::size_t>(v);
  }

  bool flag(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    const std::string s = str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    fail(ErrorKind::invalid_config, "config key '" + key + "' is not a boolean: '" + s + "'");
  }

  std::vector<std::string> list(const std::string& key) const {
    std::string s = detail::trim(str(key));
    if (s.size() >= 2 && s.front() == '[' && s.back() == ']') s = s.substr(1, s.size() - 2);
    std::vector<std::string> out;
    if (detail::trim(s).empty()) return out;
    for (const auto& item : detail::split(s, ',')) out.push_back(detail::unquote(detail::trim(item)));
    return out;
  }

  std::vector<double> numbers(const std::string& key) const {
    std::vector<double> out;
    for (const auto& item : list(key)) {
      double v = 0.0;
      require(detail::parse_double(item, v), ErrorKind::invalid_config,
              "config key '" + key + "' has a non-numeric entry '" + item + "'");
      out.push_back(v);
    }
    return out;
  }

  std::uint64_t seed() const {
    const long v = integer("seed", static_cast<long>(kDefaultSeed));
    require(v >= 0, ErrorKind::invalid_config, "seed must be nonnegative");
    return static_cast<std::uint64_t>(v);
  }

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  // Sorted `key=value` lines; the hash input.
  std::string canonical() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
    return out;
  }

  // FNV-1a over the canonical form, as 16 hex digits.
  std::string hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : canonical()) {
      h ^= ch;
      h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
  }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace overlap
