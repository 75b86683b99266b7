#pragma once

#include "occam/errors.hpp"
#include "occam/mixture_model.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

namespace occam::io {

struct GeneratorComponent {
  double weight = 1.0;
  std::vector<double> mean;
  std::vector<double> width;
};

struct GeneratorSpec {
  std::vector<GeneratorComponent> components;
  int n = 100;
  std::uint64_t seed = 1;
  std::optional<int> project_to;  // keep only this coordinate

  int n_dim() const { return components.empty() ? 0 : static_cast<int>(components.front().mean.size()); }

  void validate() const {
    if (components.empty()) throw InvalidArgument("generator needs at least one component");
    if (n < 1) throw InvalidArgument("sample count must be positive");
    double total = 0.0;
    for (const auto& c : components) {
      if (c.mean.size() != components.front().mean.size() || c.width.size() != c.mean.size() || c.mean.empty())
        throw InvalidArgument("component dimensions disagree");
      if (!(c.weight >= 0.0)) throw InvalidArgument("component weights must be non-negative");
      for (double w : c.width)
        if (!(w > 0.0) || !std::isfinite(w)) throw InvalidArgument("component widths must be positive");
      for (double m : c.mean)
        if (!std::isfinite(m)) throw InvalidArgument("component means must be finite");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument("component weights must sum to 1");
    if (project_to && (*project_to < 0 || *project_to >= n_dim()))
      throw InvalidArgument("projection axis out of range");
  }
};

/// One large component and two small ones, slightly overlapping.
inline GeneratorSpec default_spec(int n_dim = 2, int n = 100, std::uint64_t seed = 1) {
  GeneratorSpec s;
  s.components = {{0.8, {0.0, 0.0}, {1.0, 1.0}},
                  {0.1, {2.5, 2.5}, {1.0, 1.0}},
                  {0.1, {-2.5, 2.5}, {1.0, 1.0}}};
  s.n = n;
  s.seed = seed;
  if (n_dim == 1)
    s.project_to = 0;
  else if (n_dim != 2)
    throw InvalidArgument("the default generator is defined for 1 or 2 dimensions");
  return s;
}

inline Dataset generate(const GeneratorSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::vector<double> w;
  for (const auto& c : spec.components) w.push_back(c.weight);
  std::discrete_distribution<int> pick(w.begin(), w.end());
  std::normal_distribution<double> normal(0.0, 1.0);

  const int full = spec.n_dim();
  const int out_dim = spec.project_to ? 1 : full;
  RowMatrix pts(spec.n, out_dim);
  std::vector<double> row(static_cast<std::size_t>(full));
  for (int i = 0; i < spec.n; ++i) {
    const auto& c = spec.components[static_cast<std::size_t>(pick(rng))];
    for (int d = 0; d < full; ++d) row[d] = c.mean[d] + c.width[d] * normal(rng);
    if (spec.project_to)
      pts(i, 0) = row[*spec.project_to];
    else
      for (int d = 0; d < full; ++d) pts(i, d) = row[d];
  }
  return Dataset(std::move(pts));
}

/// Resample with replacement (bootstrap), same size as the input.
inline Dataset bootstrap(const Dataset& data, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> idx(0, data.size() - 1);
  RowMatrix pts(data.size(), data.n_dim());
  for (int i = 0; i < data.size(); ++i) pts.row(i) = data.points.row(idx(rng));
  return Dataset(std::move(pts), data.labels);
}

} // namespace occam::io
