#pragma once

#include "occam/errors.hpp"
#include "occam/io/csv.hpp"
#include "occam/mixture_model.hpp"

#include <cmath>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace occam::io {

struct GridSpec {
  int points = 0;                   // per axis; 0 picks 512 (1D) or 128 (2D)
  std::optional<Vector> lower, upper;  // default: data range padded by 3 deviations
};

struct PlotTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  void write(std::ostream& out) const {
    for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
    out << '\n';
    for (const auto& r : rows) {
      for (std::size_t c = 0; c < r.size(); ++c) out << (c ? "," : "") << format_double(r[c]);
      out << '\n';
    }
  }
};

struct PlotData {
  PlotTable density;  // 1D: x, pdf, comp_i; 2D: x, y, density
  PlotTable sample;
};

inline PlotData plotdata(const MixtureParams& params, const Dataset& data, const GridSpec& grid = {}) {
  const int d = data.n_dim();
  if (d > 2) throw InvalidArgument("plot data is only available for 1D and 2D models");
  if (params.n_dim() != d) throw InvalidArgument("model and dataset dimensions differ");
  const int m = grid.points > 0 ? grid.points : (d == 1 ? 512 : 128);
  if (m < 2) throw InvalidArgument("a grid needs at least two points per axis");
  const Vector sd = data.column_stddev();
  const Vector lo = grid.lower ? *grid.lower : Vector(data.column_min() - 3.0 * sd);
  Vector hi = grid.upper ? *grid.upper : Vector(data.column_max() + 3.0 * sd);
  if (lo.size() != d || hi.size() != d) throw InvalidArgument("grid bounds do not match the dimension");
  for (int k = 0; k < d; ++k)
    if (!(hi[k] > lo[k])) hi[k] = lo[k] + 1.0;

  const PreparedMixture pm(params);
  Vector scratch;
  PlotData out;
  const auto axis = [&](int k, int i) { return lo[k] + (hi[k] - lo[k]) * i / (m - 1); };
  if (d == 1) {
    out.density.header = {"x", "pdf"};
    for (int c = 0; c < params.n_components(); ++c) out.density.header.push_back("comp_" + std::to_string(c));
    for (int i = 0; i < m; ++i) {
      const double x = axis(0, i);
      std::vector<double> row{x, std::exp(log_pdf({&x, 1}, pm, scratch))};
      for (int c = 0; c < params.n_components(); ++c)
        row.push_back(pm.weights[c] * std::exp(log_normal_pdf(x, pm.means(c, 0), pm.log_widths(c, 0))));
      out.density.rows.push_back(std::move(row));
    }
  } else {
    out.density.header = {"x", "y", "density"};
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        const double xy[2] = {axis(0, i), axis(1, j)};
        out.density.rows.push_back({xy[0], xy[1], std::exp(log_pdf({xy, 2}, pm, scratch))});
      }
  }
  out.sample.header = d == 1 ? std::vector<std::string>{"x"} : std::vector<std::string>{"x", "y"};
  for (int i = 0; i < data.size(); ++i) {
    const auto r = data.row(i);
    out.sample.rows.emplace_back(r.begin(), r.end());
  }
  return out;
}

/// Writes <prefix>_density.csv and <prefix>_sample.csv.
inline void write_plotdata(const std::string& prefix, const PlotData& p) {
  for (const auto& [suffix, table] : {std::pair{"_density.csv", &p.density}, std::pair{"_sample.csv", &p.sample}}) {
    const std::string path = prefix + suffix;
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    table->write(out);
    if (!out) throw IoError("write to '" + path + "' failed");
  }
}

} // namespace occam::io
