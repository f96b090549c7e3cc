#pragma once

// CSV ingestion. Vector covariates use a tall table with named columns;
// functional covariates use a wide table whose column headers are the grid
// locations, plus a `group` column.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "overlap/dataset.hpp"
#include "overlap/error.hpp"
#include "overlap/gp.hpp"
#include "overlap/mercer_io.hpp"

namespace overlap {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const {
    const auto it = std::find(header.begin(), header.end(), name);
    require(it != header.end(), ErrorKind::schema_mismatch, "missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  }
  bool has_column(const std::string& name) const {
    return std::find(header.begin(), header.end(), name) != header.end();
  }
};

namespace detail {

// One record per line; fields may be double-quoted with "" escapes.
inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false, was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        field += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        field += ch;
      }
    } else if (ch == '"' && trim(field).empty()) {
      quoted = was_quoted = true;
      field.clear();
    } else if (ch == ',') {
      out.push_back(was_quoted ? field : trim(field));
      field.clear();
      was_quoted = false;
    } else {
      field += ch;
    }
  }
  if (quoted) fail(ErrorKind::parse_error, "line " + std::to_string(line_no) + ": unterminated quoted field");
  out.push_back(was_quoted ? field : trim(field));
  return out;
}

inline std::string quote_csv(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos && trim(s) == s) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace detail

inline CsvTable parse_csv(std::istream& in) {
  CsvTable table;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv_line(line, line_no);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size())
      fail(ErrorKind::parse_error, "row " + std::to_string(table.rows.size() + 1) + " (line " + std::to_string(line_no) +
                                       ") has " + std::to_string(fields.size()) + " fields, header has " +
                                       std::to_string(table.header.size()));
    table.rows.push_back(std::move(fields));
  }
  require(have_header, ErrorKind::parse_error, "empty CSV input");
  return table;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io_error, "cannot open '" + path + "'");
  return parse_csv(in);
}

struct DatasetSchema {
  std::string outcome = "y";
  std::string treatment = "t";
  std::vector<std::string> covariates;   // empty: every other column
  std::vector<std::string> categorical;  // one-hot encoded, first level dropped
  std::map<std::string, double> treatment_map;  // text level -> 0/1
  std::map<std::string, double> outcome_map;
  std::string oracle_y0, oracle_y1;  // optional oracle columns
};

// Parses "a:1, b:0" into a value map.
inline std::map<std::string, double> parse_value_map(const std::string& text) {
  std::map<std::string, double> out;
  if (detail::trim(text).empty()) return out;
  for (const auto& item : detail::split(text, ',')) {
    const auto colon = item.rfind(':');
    double v = 0.0;
    require(colon != std::string::npos && detail::parse_double(item.substr(colon + 1), v), ErrorKind::invalid_config,
            "value map entry '" + item + "' is not level:value");
    out[detail::trim(item.substr(0, colon))] = v;
  }
  return out;
}

namespace detail {

inline double cell_value(const CsvTable& table, std::size_t row, std::size_t col,
                         const std::map<std::string, double>& map = {}) {
  const std::string& cell = table.rows[row][col];
  if (!map.empty()) {
    const auto it = map.find(cell);
    if (it != map.end()) return it->second;
  }
  double v = 0.0;
  if (!parse_double(cell, v) || !std::isfinite(v))
    fail(ErrorKind::parse_error,
         "row " + std::to_string(row + 1) + ", column '" + table.header[col] + "': non-numeric value '" + cell + "'");
  return v;
}

}  // namespace detail

// Columns named y0 and y1 are read as oracle outcomes (the layout written by
// write_dataset) unless the schema names oracle columns or lists them as
// covariates.
inline ObservationalDataset dataset_from_table(const CsvTable& table, const DatasetSchema& requested) {
  DatasetSchema schema = requested;
  const auto listed = [&](const std::string& c) {
    return std::find(schema.covariates.begin(), schema.covariates.end(), c) != schema.covariates.end();
  };
  if (schema.oracle_y0.empty() && schema.oracle_y1.empty() && table.has_column("y0") && table.has_column("y1") &&
      !listed("y0") && !listed("y1") && schema.outcome != "y0" && schema.outcome != "y1") {
    schema.oracle_y0 = "y0";
    schema.oracle_y1 = "y1";
  }
  const std::size_t n = table.rows.size();
  require(n > 0, ErrorKind::parse_error, "CSV has no data rows");
  const std::size_t y_col = table.column(schema.outcome);
  const std::size_t t_col = table.column(schema.treatment);
  std::set<std::string> reserved{schema.outcome, schema.treatment};
  if (!schema.oracle_y0.empty()) reserved.insert(schema.oracle_y0);
  if (!schema.oracle_y1.empty()) reserved.insert(schema.oracle_y1);

  std::vector<std::string> covariates = schema.covariates;
  if (covariates.empty())
    for (const auto& h : table.header)
      if (!reserved.count(h)) covariates.push_back(h);
  const std::set<std::string> categorical(schema.categorical.begin(), schema.categorical.end());
  for (const auto& c : schema.categorical)
    require(std::find(covariates.begin(), covariates.end(), c) != covariates.end(), ErrorKind::schema_mismatch,
            "categorical column '" + c + "' is not a covariate");

  struct Encoded {
    std::size_t col;
    std::string level;  // empty for numeric columns
  };
  std::vector<Encoded> encoded;
  ObservationalDataset data;
  for (const auto& name : covariates) {
    const std::size_t col = table.column(name);
    if (!categorical.count(name)) {
      encoded.push_back({col, {}});
      data.covariate_names.push_back(name);
      continue;
    }
    std::set<std::string> levels;
    for (const auto& row : table.rows) levels.insert(row[col]);
    for (auto it = std::next(levels.begin()); it != levels.end(); ++it) {
      encoded.push_back({col, *it});
      data.covariate_names.push_back(name + "=" + *it);
    }
  }

  const auto rows = static_cast<Eigen::Index>(n);
  data.y.resize(rows);
  data.t.resize(n);
  data.z.resize(rows, static_cast<Eigen::Index>(encoded.size()));
  for (std::size_t r = 0; r < n; ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    data.y(i) = detail::cell_value(table, r, y_col, schema.outcome_map);
    const double t = detail::cell_value(table, r, t_col, schema.treatment_map);
    if (t != 0.0 && t != 1.0)
      fail(ErrorKind::parse_error, "row " + std::to_string(r + 1) + ", column '" + schema.treatment +
                                       "': treatment must be 0 or 1, got '" + table.rows[r][t_col] + "'");
    data.t[r] = static_cast<int>(t);
    for (std::size_t k = 0; k < encoded.size(); ++k) {
      const auto& e = encoded[k];
      data.z(i, static_cast<Eigen::Index>(k)) =
          e.level.empty() ? detail::cell_value(table, r, e.col) : (table.rows[r][e.col] == e.level ? 1.0 : 0.0);
    }
  }
  if (!schema.oracle_y0.empty() || !schema.oracle_y1.empty()) {
    const std::size_t c0 = table.column(schema.oracle_y0), c1 = table.column(schema.oracle_y1);
    data.oracle_y0 = Vector(rows);
    data.oracle_y1 = Vector(rows);
    for (std::size_t r = 0; r < n; ++r) {
      (*data.oracle_y0)(static_cast<Eigen::Index>(r)) = detail::cell_value(table, r, c0);
      (*data.oracle_y1)(static_cast<Eigen::Index>(r)) = detail::cell_value(table, r, c1);
    }
  }
  data.validate();
  return data;
}

inline ObservationalDataset load_dataset(const std::string& path, const DatasetSchema& schema) {
  return dataset_from_table(read_csv(path), schema);
}

// Columns y, t, the covariates by name, then y0, y1 when oracles are present.
// Reading it back with save_schema(data) reproduces the dataset exactly.
inline void write_dataset(std::ostream& out, const ObservationalDataset& data) {
  data.validate();
  const auto names = data.covariate_names.empty() ? [&] {
    std::vector<std::string> v;
    for (Eigen::Index k = 0; k < data.z.cols(); ++k) v.push_back("x" + std::to_string(k));
    return v;
  }() : data.covariate_names;
  out << "y,t";
  for (const auto& n : names) out << ',' << detail::quote_csv(n);
  if (data.has_oracle()) out << ",y0,y1";
  out << '\n';
  for (std::size_t r = 0; r < data.size(); ++r) {
    const auto i = static_cast<Eigen::Index>(r);
    out << detail::format_double(data.y(i)) << ',' << data.t[r];
    for (Eigen::Index k = 0; k < data.z.cols(); ++k) out << ',' << detail::format_double(data.z(i, k));
    if (data.has_oracle())
      out << ',' << detail::format_double((*data.oracle_y0)(i)) << ',' << detail::format_double((*data.oracle_y1)(i));
    out << '\n';
  }
}

inline DatasetSchema save_schema(const ObservationalDataset& data) {
  DatasetSchema s;
  s.outcome = "y";
  s.treatment = "t";
  if (data.covariate_names.empty()) {
    for (Eigen::Index k = 0; k < data.z.cols(); ++k) s.covariates.push_back("x" + std::to_string(k));
  } else {
    s.covariates = data.covariate_names;
  }
  if (data.has_oracle()) {
    s.oracle_y0 = "y0";
    s.oracle_y1 = "y1";
  }
  return s;
}

inline void save_dataset(const std::string& path, const ObservationalDataset& data) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io_error, "cannot write '" + path + "'");
  write_dataset(out, data);
  require(static_cast<bool>(out), ErrorKind::io_error, "write to '" + path + "' failed");
}

inline FunctionalSampleSet functional_from_table(const CsvTable& table, const std::string& group_column = "group") {
  const std::size_t g_col = table.column(group_column);
  std::vector<double> points;
  std::vector<std::size_t> cols;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (c == g_col) continue;
    double v = 0.0;
    require(detail::parse_double(table.header[c], v), ErrorKind::schema_mismatch,
            "wide-format header '" + table.header[c] + "' is not a grid location");
    points.push_back(v);
    cols.push_back(c);
  }
  require(!points.empty(), ErrorKind::schema_mismatch, "wide-format file has no grid columns");
  require(!table.rows.empty(), ErrorKind::parse_error, "wide-format file has no rows");
  FunctionalSampleSet s{Grid(points), Matrix(static_cast<Eigen::Index>(table.rows.size()),
                                             static_cast<Eigen::Index>(points.size())), {}};
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const double g = detail::cell_value(table, r, g_col);
    require(g == 0.0 || g == 1.0, ErrorKind::parse_error,
            "row " + std::to_string(r + 1) + ", column '" + group_column + "': group must be 0 or 1");
    s.group.push_back(static_cast<int>(g));
    for (std::size_t k = 0; k < cols.size(); ++k)
      s.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = detail::cell_value(table, r, cols[k]);
  }
  s.validate();
  return s;
}

inline FunctionalSampleSet load_functional(const std::string& path, const std::string& group_column = "group") {
  return functional_from_table(read_csv(path), group_column);
}

inline void write_functional(std::ostream& out, const FunctionalSampleSet& s) {
  s.validate();
  out << "group";
  for (double p : s.grid.points()) out << ',' << detail::format_double(p);
  out << '\n';
  for (Eigen::Index r = 0; r < s.values.rows(); ++r) {
    out << s.group[static_cast<std::size_t>(r)];
    for (Eigen::Index k = 0; k < s.values.cols(); ++k) out << ',' << detail::format_double(s.values(r, k));
    out << '\n';
  }
}

inline void save_functional(const std::string& path, const FunctionalSampleSet& s) {
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorKind::io_error, "cannot write '" + path + "'");
  write_functional(out, s);
  require(static_cast<bool>(out), ErrorKind::io_error, "write to '" + path + "' failed");
}

}  // namespace overlap
