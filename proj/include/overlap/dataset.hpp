#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "overlap/error.hpp"
#include "overlap/gp.hpp"

namespace overlap {

// Units with outcome y, binary treatment t and covariate rows z. Oracle
// potential outcomes are present only for simulated data.
struct ObservationalDataset {
  Vector y;
  std::vector<int> t;
  Matrix z;  // n x p
  std::vector<std::string> covariate_names;
  std::optional<Vector> oracle_y0, oracle_y1;

  std::size_t size() const noexcept { return t.size(); }
  bool has_oracle() const noexcept { return oracle_y0.has_value() && oracle_y1.has_value(); }

  std::size_t treated() const {
    std::size_t c = 0;
    for (int v : t) c += (v == 1);
    return c;
  }

  void validate() const {
    const auto n = static_cast<Eigen::Index>(t.size());
    require(y.size() == n && z.rows() == n, ErrorKind::schema_mismatch, "outcome, treatment and covariate rows differ");
    require(covariate_names.empty() || static_cast<Eigen::Index>(covariate_names.size()) == z.cols(),
            ErrorKind::schema_mismatch, "covariate name count differs from covariate columns");
    for (int v : t) require(v == 0 || v == 1, ErrorKind::parse_error, "treatment must be 0 or 1");
    require(y.allFinite() && z.allFinite(), ErrorKind::parse_error, "non-finite outcome or covariate");
    if (oracle_y0 || oracle_y1) {
      require(has_oracle(), ErrorKind::schema_mismatch, "oracle outcomes must come in pairs");
      require(oracle_y0->size() == n && oracle_y1->size() == n, ErrorKind::schema_mismatch,
              "oracle outcome length differs from the dataset");
    }
  }

  // Y = Y(1) T + Y(0) (1 - T), checked exactly.
  bool consistent() const {
    if (!has_oracle()) return true;
    for (std::size_t i = 0; i < size(); ++i) {
      const auto k = static_cast<Eigen::Index>(i);
      const double expected = t[i] == 1 ? (*oracle_y1)(k) : (*oracle_y0)(k);
      if (y(k) != expected) return false;
    }
    return true;
  }

  // Rows in the given order; duplicates allowed (bootstrap resamples).
  ObservationalDataset rows(std::span<const std::size_t> index) const {
    ObservationalDataset out;
    const auto m = static_cast<Eigen::Index>(index.size());
    out.y.resize(m);
    out.t.resize(index.size());
    out.z.resize(m, z.cols());
    out.covariate_names = covariate_names;
    if (has_oracle()) {
      out.oracle_y0 = Vector(m);
      out.oracle_y1 = Vector(m);
    }
    for (Eigen::Index r = 0; r < m; ++r) {
      const auto src = static_cast<Eigen::Index>(index[static_cast<std::size_t>(r)]);
      if (src >= static_cast<Eigen::Index>(size())) fail(ErrorKind::invalid_config, "row index out of range");
      out.y(r) = y(src);
      out.t[static_cast<std::size_t>(r)] = t[static_cast<std::size_t>(src)];
      out.z.row(r) = z.row(src);
      if (has_oracle()) {
        (*out.oracle_y0)(r) = (*oracle_y0)(src);
        (*out.oracle_y1)(r) = (*oracle_y1)(src);
      }
    }
    return out;
  }
};

// Membership flags as row indices.
inline std::vector<std::size_t> members_of(const std::vector<bool>& member) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < member.size(); ++i)
    if (member[i]) out.push_back(i);
  return out;
}

}  // namespace overlap
