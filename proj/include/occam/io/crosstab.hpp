#pragma once

// Cross-evaluation of trained models on each other's samples. Row i holds
// model i; every row is normalized by the model's own training-sample value.

#include "occam/bit_cost.hpp"
#include "occam/errors.hpp"
#include "occam/io/csv.hpp"
#include "occam/optimizer.hpp"

#include <cstdio>
#include <fstream>
#include <future>
#include <iomanip>
#include <ostream>
#include <string>
#include <vector>

namespace occam::io {

struct CrossTable {
  std::vector<std::string> models;
  std::vector<std::string> samples;
  Matrix q;            // raw Q(model_i, sample_j), +inf when invalid
  Matrix q_l;          // raw negative log-likelihood
  Matrix rel_q;        // (Q_ij - Q_ii) / Q_ii
  Matrix rel_entropy;  // same with q_l
};

namespace detail {

inline double relative(double v, double diag) {
  if (!std::isfinite(v) || !std::isfinite(diag)) return std::numeric_limits<double>::infinity();
  return (v - diag) / diag;
}

} // namespace detail

inline CrossTable crosstab(const std::vector<FitResult>& fits, const std::vector<Dataset>& samples, QMode mode,
                           std::vector<std::string> model_ids = {}, std::vector<std::string> sample_ids = {}) {
  const int n = static_cast<int>(fits.size());
  if (n == 0 || samples.size() != fits.size())
    throw InvalidArgument("crosstab needs one fit per sample (got " + std::to_string(fits.size()) + " fits and " +
                          std::to_string(samples.size()) + " samples)");
  for (int i = 0; i < n; ++i) {
    if (model_ids.size() < fits.size()) model_ids.push_back("m" + std::to_string(model_ids.size()));
    if (sample_ids.size() < samples.size()) sample_ids.push_back("s" + std::to_string(sample_ids.size()));
  }

  CrossTable t{model_ids, sample_ids, Matrix(n, n), Matrix(n, n), Matrix(n, n), Matrix(n, n)};
  // One task per model row; each task owns its evaluators.
  std::vector<std::future<void>> rows;
  for (int i = 0; i < n; ++i)
    rows.push_back(std::async(std::launch::async, [&, i] {
      for (int j = 0; j < n; ++j) {
        const QEvaluator eval(samples[static_cast<std::size_t>(j)], QOptions{mode, fits[i].delta_x});
        const QBreakdown q = eval(fits[i].params, fits[i].delta_m);
        t.q(i, j) = q.valid ? q.q_total : kInf;
        t.q_l(i, j) = std::isfinite(q.q_l) ? q.q_l : kInf;
      }
    }));
  for (auto& r : rows) r.get();

  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      t.rel_q(i, j) = i == j && std::isfinite(t.q(i, i)) ? 0.0 : detail::relative(t.q(i, j), t.q(i, i));
      t.rel_entropy(i, j) = i == j && std::isfinite(t.q_l(i, i)) ? 0.0 : detail::relative(t.q_l(i, j), t.q_l(i, i));
    }
  return t;
}

namespace detail {

inline std::string percent(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * v);
  return buf;
}

inline void write_block(std::ostream& out, const CrossTable& t, const Matrix& m, const std::string& title) {
  out << title << '\n';
  out << std::setw(10) << "model";
  for (const auto& s : t.samples) out << std::setw(10) << s;
  out << '\n';
  for (int i = 0; i < m.rows(); ++i) {
    out << std::setw(10) << t.models[static_cast<std::size_t>(i)];
    for (int j = 0; j < m.cols(); ++j) out << std::setw(10) << percent(m(i, j));
    out << '\n';
  }
}

} // namespace detail

/// Aligned columns, both matrices, for reading.
inline void write_crosstab_text(std::ostream& out, const CrossTable& t) {
  detail::write_block(out, t, t.rel_q, "relative Q");
  out << '\n';
  detail::write_block(out, t, t.rel_entropy, "relative entropy");
}

/// Long format: one row per cell with raw and relative values.
inline void write_crosstab_csv(std::ostream& out, const CrossTable& t) {
  out << "model,sample,q,q_l,rel_q,rel_entropy\n";
  const auto cell = [](double v) {
    if (std::isinf(v)) return std::string(v > 0 ? "inf" : "-inf");
    if (std::isnan(v)) return std::string("nan");
    return format_double(v);
  };
  for (int i = 0; i < t.q.rows(); ++i)
    for (int j = 0; j < t.q.cols(); ++j)
      out << t.models[static_cast<std::size_t>(i)] << ',' << t.samples[static_cast<std::size_t>(j)] << ','
          << cell(t.q(i, j)) << ',' << cell(t.q_l(i, j)) << ',' << cell(t.rel_q(i, j)) << ','
          << cell(t.rel_entropy(i, j)) << '\n';
}

} // namespace occam::io
