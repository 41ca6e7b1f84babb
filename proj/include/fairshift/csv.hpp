/*
 * Copyright 2026 The fairshift Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef FAIRSHIFT_CSV_HPP_
#define FAIRSHIFT_CSV_HPP_

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "fairshift/data.hpp"

namespace fairshift {

namespace csv_detail {

// Shortest decimal string that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      return cells;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

inline double parse_number(std::string_view cell, std::size_t line_no,
                           std::size_t column) {
  cell = trim(cell);
  if (!cell.empty() && cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (cell.empty() || res.ec != std::errc() ||
      res.ptr != cell.data() + cell.size()) {
    throw ParseError("non-numeric cell '" + std::string(cell) + "' in column " +
                         std::to_string(column + 1),
                     line_no);
  }
  if (!std::isfinite(v)) {
    throw ParseError("non-finite cell '" + std::string(cell) + "' in column " +
                         std::to_string(column + 1),
                     line_no);
  }
  return v;
}

struct Header {
  std::size_t p = 0;
  bool has_y = false;
  bool has_z = false;
  bool has_domain = false;
  std::size_t width() const { return p + has_y + has_z + has_domain; }
};

inline Header parse_header(std::string_view line) {
  Header h;
  const auto cells = split(line);
  std::size_t i = 0;
  while (i < cells.size() && trim(cells[i]) == "x" + std::to_string(i + 1)) ++i;
  h.p = i;
  if (h.p == 0) throw ParseError("header must start with x1", 1);
  if (i < cells.size() && trim(cells[i]) == "y") { h.has_y = true; ++i; }
  if (i < cells.size() && trim(cells[i]) == "z") { h.has_z = true; ++i; }
  if (i < cells.size() && trim(cells[i]) == "domain") { h.has_domain = true; ++i; }
  if (i != cells.size()) {
    throw ParseError("malformed header: unexpected column '" +
                         std::string(trim(cells[i])) +
                         "' (expected x1..xp[,y][,z][,domain])",
                     1);
  }
  return h;
}

}  // namespace csv_detail

// Parses the dataset CSV schema. A `domain` column must be constant across
// rows; target datasets come back with their labels HeldOut.
inline Dataset parse_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("empty file: missing header", 1);
  const csv_detail::Header h = csv_detail::parse_header(line);

  std::vector<double> x, y, z;
  std::optional<Domain> domain;
  std::size_t line_no = 1;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv_detail::trim(line).empty()) continue;
    const auto cells = csv_detail::split(line);
    if (cells.size() != h.width()) {
      throw ParseError("ragged row: expected " + std::to_string(h.width()) +
                           " cells, found " + std::to_string(cells.size()),
                       line_no);
    }
    std::size_t c = 0;
    for (; c < h.p; ++c) x.push_back(csv_detail::parse_number(cells[c], line_no, c));
    if (h.has_y) { y.push_back(csv_detail::parse_number(cells[c], line_no, c)); ++c; }
    if (h.has_z) {
      const double v = csv_detail::parse_number(cells[c], line_no, c);
      if (v != 0.0 && v != 1.0) throw ParseError("z must be 0 or 1", line_no);
      z.push_back(v);
      ++c;
    }
    if (h.has_domain) {
      const auto cell = csv_detail::trim(cells[c]);
      Domain d;
      if (cell == "source") {
        d = Domain::Source;
      } else if (cell == "target") {
        d = Domain::Target;
      } else {
        throw ParseError("domain must be 'source' or 'target', found '" +
                             std::string(cell) + "'",
                         line_no);
      }
      if (domain && *domain != d) {
        throw ParseError("mixed domain values in one file", line_no);
      }
      domain = d;
    }
    ++rows;
  }

  const auto n = static_cast<Eigen::Index>(rows);
  const auto p = static_cast<Eigen::Index>(h.p);
  Matrix features =
      Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                     Eigen::RowMajor>>(x.data(), n, p);
  std::optional<Vector> labels;
  if (h.has_y) labels = Eigen::Map<const Vector>(y.data(), n);
  std::optional<Vector> prot;
  if (h.has_z) prot = Eigen::Map<const Vector>(z.data(), n);
  const Domain d = domain.value_or(Domain::Source);
  const LabelRole role =
      d == Domain::Target && h.has_y ? LabelRole::HeldOut : LabelRole::Training;
  return Dataset(std::move(features), d, std::move(labels), std::move(prot), role);
}

inline Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return parse_csv(in);
}

inline void write_csv(const Dataset& d, std::ostream& out,
                      bool with_domain = true) {
  for (Eigen::Index j = 0; j < d.dim(); ++j) {
    out << (j ? "," : "") << 'x' << (j + 1);
  }
  if (d.has_labels()) out << ",y";
  if (d.has_protected()) out << ",z";
  if (with_domain) out << ",domain";
  out << '\n';
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.dim(); ++j) {
      out << (j ? "," : "") << csv_detail::format_double(d.features()(i, j));
    }
    if (d.has_labels()) out << ',' << csv_detail::format_double(d.labels()(i));
    if (d.has_protected()) {
      out << ',' << (d.protected_attribute()(i) == 1.0 ? '1' : '0');
    }
    if (with_domain) out << ',' << to_string(d.domain());
    out << '\n';
  }
}

inline void save_csv(const Dataset& d, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  write_csv(d, out);
  if (!out) throw ValidationError("write failed for '" + path + "'");
}

// Debug dump of an arbitrary matrix with header c1..cm.
inline void save_matrix_csv(const Matrix& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write '" + path + "'");
  for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << 'c' << (j + 1);
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      out << (j ? "," : "") << csv_detail::format_double(m(i, j));
    }
    out << '\n';
  }
}

}  // namespace fairshift

#endif  // FAIRSHIFT_CSV_HPP_
