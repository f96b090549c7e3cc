#pragma once

// Plain-text Mercer spec files.
//
//   # comment
//   basis explicit            (or: sine | sine-orthonormal | gaussian-example <sigma2>)
//   grid
//   0.125
//   0.25
//   terms
//   1, 1.0, 1.0               (j, c_j, a_j)
//   2, 0.25, 0.5
//   psi                       (explicit basis only: j, psi_j(t_1), ..., psi_j(t_n))
//   1, 0.1, 0.2
//
// Terms must be listed as j = 1..J in order.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "overlap/gp.hpp"

namespace overlap {

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline bool parse_double(std::string_view text, double& out) {
  const std::string t = trim(text);
  if (t.empty()) return false;
  const char* first = t.data();
  const char* last = t.data() + t.size();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    double back = 0.0;
    if (parse_double(buf, back) && back == v) break;
  }
  return buf;
}

}  // namespace detail

inline MercerSpec parse_mercer_spec(std::istream& in) {
  enum class Section { none, grid, terms, psi } section = Section::none;
  std::string basis_kind = "explicit";
  double basis_sigma2 = 0.0;
  std::vector<double> grid_pts, c, a;
  std::vector<std::vector<double>> psi_rows;

  std::string line;
  std::size_t line_no = 0;
  auto bad = [&](const std::string& why) {
    fail(ErrorKind::parse_error, "mercer spec line " + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string text = detail::trim(line);
    if (text.empty()) continue;
    if (text.rfind("basis", 0) == 0) {
      std::istringstream words(text.substr(5));
      words >> basis_kind;
      if (basis_kind == "gaussian-example" && !(words >> basis_sigma2)) bad("gaussian-example needs sigma2");
      continue;
    }
    if (text == "grid") { section = Section::grid; continue; }
    if (text == "terms") { section = Section::terms; continue; }
    if (text == "psi") { section = Section::psi; continue; }

    const auto fields = detail::split(text, ',');
    std::vector<double> nums(fields.size());
    for (std::size_t k = 0; k < fields.size(); ++k)
      if (!detail::parse_double(fields[k], nums[k])) bad("not a number: '" + fields[k] + "'");
    switch (section) {
      case Section::none:
        bad("value outside a section");
        break;
      case Section::grid:
        if (nums.size() != 1) bad("grid lines hold one value");
        grid_pts.push_back(nums[0]);
        break;
      case Section::terms:
        if (nums.size() != 3) bad("term lines are 'j, c_j, a_j'");
        if (nums[0] != static_cast<double>(c.size() + 1)) bad("terms must be numbered 1..J in order");
        c.push_back(nums[1]);
        a.push_back(nums[2]);
        break;
      case Section::psi:
        if (nums.size() < 2) bad("psi lines are 'j, values...'");
        if (nums[0] != static_cast<double>(psi_rows.size() + 1)) bad("psi rows must be numbered 1..J in order");
        psi_rows.emplace_back(nums.begin() + 1, nums.end());
        break;
    }
  }
  if (grid_pts.empty()) fail(ErrorKind::parse_error, "mercer spec has no grid");
  if (c.empty()) fail(ErrorKind::parse_error, "mercer spec has no terms");

  Grid grid(grid_pts);
  const auto J = static_cast<Eigen::Index>(c.size());
  const auto n = static_cast<Eigen::Index>(grid.size());
  Matrix basis;
  if (basis_kind == "explicit") {
    if (static_cast<Eigen::Index>(psi_rows.size()) != J)
      fail(ErrorKind::parse_error, "explicit basis needs one psi row per term");
    basis.resize(J, n);
    for (Eigen::Index j = 0; j < J; ++j) {
      const auto& row = psi_rows[static_cast<std::size_t>(j)];
      if (static_cast<Eigen::Index>(row.size()) != n)
        fail(ErrorKind::parse_error, "psi row " + std::to_string(j + 1) + " does not match the grid size");
      for (Eigen::Index i = 0; i < n; ++i) basis(j, i) = row[static_cast<std::size_t>(i)];
    }
  } else if (basis_kind == "sine") {
    basis = sine_basis(grid, c.size());
  } else if (basis_kind == "sine-orthonormal") {
    basis = orthonormalize(sine_basis(grid, c.size()), grid.trapezoid_weights());
  } else if (basis_kind == "gaussian-example") {
    basis = gaussian_kernel_mercer(basis_sigma2, c.size(), grid).basis();
  } else {
    fail(ErrorKind::parse_error, "unknown basis kind '" + basis_kind + "'");
  }
  return MercerSpec(std::move(grid), Eigen::Map<const Vector>(c.data(), J),
                    Eigen::Map<const Vector>(a.data(), J), std::move(basis));
}

inline MercerSpec read_mercer_spec(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io_error, "cannot open mercer spec '" + path + "'");
  return parse_mercer_spec(in);
}

// Always writes an explicit basis so that reading back is exact.
inline void write_mercer_spec(std::ostream& out, const MercerSpec& spec) {
  out << "# mercer spec: " << spec.terms() << " terms on " << spec.grid().size() << " grid points\n";
  out << "basis explicit\ngrid\n";
  for (double t : spec.grid().points()) out << detail::format_double(t) << '\n';
  out << "terms\n";
  for (std::size_t j = 0; j < spec.terms(); ++j)
    out << j + 1 << ", " << detail::format_double(spec.eigenvalues()(static_cast<Eigen::Index>(j))) << ", "
        << detail::format_double(spec.mean_coeffs()(static_cast<Eigen::Index>(j))) << '\n';
  out << "psi\n";
  for (Eigen::Index j = 0; j < spec.basis().rows(); ++j) {
    out << j + 1;
    for (Eigen::Index i = 0; i < spec.basis().cols(); ++i) out << ", " << detail::format_double(spec.basis()(j, i));
    out << '\n';
  }
}

inline void save_mercer_spec(const std::string& path, const MercerSpec& spec) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io_error, "cannot write mercer spec '" + path + "'");
  write_mercer_spec(out, spec);
}

}  // namespace overlap
