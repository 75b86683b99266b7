#pragma once

// Bound-constrained Nelder-Mead with dimension-adaptive coefficients
// (Gao & Han) and restarts around the incumbent until the budget is spent.

#include "occam/optim/box.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace occam::optim {

struct NelderMeadOptions {
  long max_evaluations = 2000;
  double initial_step = 0.1;  // fraction of the box width per coordinate
  double f_tolerance = 1e-10;
  double x_tolerance = 1e-10;  // relative to box width
  int max_restarts = 20;
};

template <class F>
StageResult nelder_mead(F& objective, const Box& box, const Vec& start, const NelderMeadOptions& opt) {
  const int n = box.dim();
  Tracked<F> f(objective, opt.max_evaluations);
  const Vec width = box.width();

  const double alpha = 1.0;
  const double gamma = 1.0 + 2.0 / n;
  const double rho = 0.75 - 1.0 / (2.0 * n);
  const double sigma = 1.0 - 1.0 / n;

  Vec x0 = box.clamp(start);
  double step = opt.initial_step;

  for (int restart = 0; restart <= opt.max_restarts && !f.exhausted(); ++restart) {
    std::vector<Vec> pts(static_cast<std::size_t>(n + 1), x0);
    std::vector<double> fv(static_cast<std::size_t>(n + 1));
    fv[0] = f(pts[0]);
    for (int i = 0; i < n && !f.exhausted(); ++i) {
      Vec p = x0;
      double h = step * width[i];
      if (p[i] + h > box.upper[i]) h = -h;  // step inward at the upper bound
      p[i] = std::clamp(p[i] + h, box.lower[i], box.upper[i]);
      pts[i + 1] = p;
      fv[i + 1] = f(p);
    }
    if (f.exhausted()) break;

    std::vector<int> order(static_cast<std::size_t>(n + 1));
    bool converged = false;
    while (!f.exhausted()) {
      std::iota(order.begin(), order.end(), 0);
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return fv[a] < fv[b]; });
      const int best = order.front(), worst = order.back(), second = order[n - 1];

      // Convergence: flat function values and a collapsed simplex.
      double size = 0.0;
      for (int i = 0; i <= n; ++i)
        size = std::max(size, ((pts[i] - pts[best]).cwiseQuotient(width)).cwiseAbs().maxCoeff());
      const bool flat = std::isfinite(fv[worst]) &&
                        std::abs(fv[worst] - fv[best]) <= opt.f_tolerance * (1.0 + std::abs(fv[best]));
      if ((flat && size < 1e-6) || size < opt.x_tolerance) {
        converged = true;
        break;
      }

      Vec centroid = Vec::Zero(n);
      for (int i = 0; i <= n; ++i)
        if (i != worst) centroid += pts[i];
      centroid /= n;

      const Vec xr = box.clamp(centroid + alpha * (centroid - pts[worst]));
      const double fr = f(xr);
      if (fr < fv[best]) {
        const Vec xe = box.clamp(centroid + gamma * (xr - centroid));
        const double fe = f.exhausted() ? std::numeric_limits<double>::infinity() : f(xe);
        if (fe < fr) {
          pts[worst] = xe;
          fv[worst] = fe;
        } else {
          pts[worst] = xr;
          fv[worst] = fr;
        }
        continue;
      }
      if (fr < fv[second]) {
        pts[worst] = xr;
        fv[worst] = fr;
        continue;
      }
      // Contraction, outside or inside.
      const bool outside = fr < fv[worst];
      const Vec xc = outside ? box.clamp(centroid + rho * (xr - centroid))
                             : box.clamp(centroid + rho * (pts[worst] - centroid));
      const double fc = f(xc);
      if (fc < (outside ? fr : fv[worst])) {
        pts[worst] = xc;
        fv[worst] = fc;
        continue;
      }
      // Shrink towards the best vertex.
      for (int i = 0; i <= n && !f.exhausted(); ++i) {
        if (i == best) continue;
        pts[i] = box.clamp(pts[best] + sigma * (pts[i] - pts[best]));
        fv[i] = f(pts[i]);
      }
    }
    x0 = f.best_x();
    step = converged ? std::max(step * 0.5, 1e-4) : step;
  }
  return f.result();
}

} // namespace occam::optim
