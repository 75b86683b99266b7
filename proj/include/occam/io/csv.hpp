#pragma once

// Headerless comma-separated datasets, one point per row, '#' comments.

#include "occam/errors.hpp"
#include "occam/mixture_model.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace occam::io {

/// Shortest decimal that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw FormatError("not a number: '" + std::string(s) + "'");
  return v;
}

inline Dataset read_csv(std::istream& in) {
  std::vector<double> values;
  int cols = -1, rows = 0, line_no = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    int c = 0;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      try {
        values.push_back(parse_double(rest.substr(0, comma)));
      } catch (const FormatError& e) {
        throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
      }
      ++c;
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (cols < 0) cols = c;
    if (c != cols)
      throw FormatError("line " + std::to_string(line_no) + ": expected " + std::to_string(cols) + " columns, got " +
                        std::to_string(c));
    ++rows;
  }
  if (rows == 0) throw FormatError("dataset has no rows");
  RowMatrix pts(rows, cols);
  std::copy(values.begin(), values.end(), pts.data());
  try {
    return Dataset(std::move(pts));
  } catch (const InvalidArgument& e) {
    throw FormatError(e.what());
  }
}

inline Dataset read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return read_csv(in);
}

inline void write_csv(std::ostream& out, const Dataset& data) {
  for (int i = 0; i < data.size(); ++i) {
    for (int d = 0; d < data.n_dim(); ++d) {
      if (d) out << ',';
      out << format_double(data.points(i, d));
    }
    out << '\n';
  }
}

inline void write_csv(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  write_csv(out, data);
  if (!out) throw IoError("write to '" + path + "' failed");
}

} // namespace occam::io
