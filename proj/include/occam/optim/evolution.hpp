#pragma once

// Elitist (mu + lambda) evolution strategy with self-adaptive step sizes and
// intermediate recombination. Used as the global-search stage.

#include "occam/optim/box.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace occam::optim {

struct EvolutionOptions {
  long max_evaluations = 5000;
  int parents = 10;
  int offspring = 40;
  double initial_sigma = 0.05;    // relative to the box width
  double min_sigma = 1e-8;
  double random_fraction = 0.25;  // share of the initial population drawn uniformly
};

template <class F>
StageResult evolution_strategy(F& objective, const Box& box, const Vec& start, std::mt19937_64& rng,
                               const EvolutionOptions& opt) {
  struct Individual {
    Vec x;
    double sigma;
    double f;
  };
  const int n = box.dim();
  Tracked<F> f(objective, opt.max_evaluations);
  const Vec width = box.width();
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double tau = 1.0 / std::sqrt(2.0 * n);

  std::vector<Individual> pop;
  const Vec x0 = box.clamp(start);
  pop.push_back({x0, opt.initial_sigma, f(x0)});
  const int n_random = static_cast<int>(opt.random_fraction * opt.parents);
  while (static_cast<int>(pop.size()) < opt.parents && !f.exhausted()) {
    Vec x(n);
    if (static_cast<int>(pop.size()) <= n_random) {
      for (int i = 0; i < n; ++i) x[i] = box.lower[i] + unit(rng) * width[i];
    } else {
      for (int i = 0; i < n; ++i) x[i] = x0[i] + opt.initial_sigma * width[i] * normal(rng);
      x = box.clamp(x);
    }
    pop.push_back({x, opt.initial_sigma, f(x)});
  }

  std::vector<Individual> children;
  while (!f.exhausted()) {
    children.clear();
    for (int c = 0; c < opt.offspring && !f.exhausted(); ++c) {
      // Two-parent intermediate recombination, then log-normal step mutation.
      const auto pick = [&] { return static_cast<std::size_t>(unit(rng) * pop.size()) % pop.size(); };
      const Individual& a = pop[pick()];
      const Individual& b = pop[pick()];
      const double s = std::clamp(std::sqrt(a.sigma * b.sigma) * std::exp(tau * normal(rng)),
                                  opt.min_sigma, 0.5);
      Vec x = 0.5 * (a.x + b.x);
      for (int i = 0; i < n; ++i) x[i] += s * width[i] * normal(rng);
      x = box.clamp(x);
      children.push_back({x, s, f(x)});
    }
    for (auto& ch : children) pop.push_back(std::move(ch));
    std::stable_sort(pop.begin(), pop.end(), [](const Individual& l, const Individual& r) { return l.f < r.f; });
    if (static_cast<int>(pop.size()) > opt.parents) pop.resize(static_cast<std::size_t>(opt.parents));
  }
  return f.result();
}

} // namespace occam::optim
