#pragma once

// Projected BFGS with numerically differentiated gradients and an Armijo
// backtracking line search. Coordinates sitting on a bound with the gradient
// pointing outward are frozen for the step.

#include "occam/optim/box.hpp"
#include "occam/optim/numeric_gradient.hpp"

#include <cmath>

namespace occam::optim {

struct QuasiNewtonOptions {
  long max_evaluations = 3000;
  double rel_step = 1e-6;
  double f_tolerance = 1e-12;
  int max_backtracks = 40;
};

template <class F>
StageResult quasi_newton(F& objective, const Box& box, const Vec& start, const QuasiNewtonOptions& opt) {
  const int n = box.dim();
  Tracked<F> f(objective, opt.max_evaluations);
  Vec x = box.clamp(start);
  double fx = f(x);
  if (!std::isfinite(fx) || f.remaining() < 2 * n + 2) return f.result();

  Vec g = numeric_gradient(f, x, opt.rel_step, fx, &box).gradient;
  const Vec width = box.width();
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(n, n);
  bool scaled = false;
  const double gn = g.norm();
  if (gn > 0.0) h *= 1e-3 * width.norm() / gn;
  int stalls = 0;

  while (f.remaining() > 2 * n + 2) {
    Vec d = -h * g;
    for (int i = 0; i < n; ++i) {
      const bool at_lo = x[i] <= box.lower[i] && d[i] < 0.0;
      const bool at_hi = x[i] >= box.upper[i] && d[i] > 0.0;
      if (at_lo || at_hi) d[i] = 0.0;
    }
    double slope = g.dot(d);
    if (!(slope < 0.0)) {
      // Not a descent direction: restart from projected steepest descent.
      h = Eigen::MatrixXd::Identity(n, n) * (gn > 0.0 ? 1e-3 * width.norm() / std::max(g.norm(), 1e-300) : 1.0);
      scaled = false;
      d = -h * g;
      for (int i = 0; i < n; ++i)
        if ((x[i] <= box.lower[i] && d[i] < 0.0) || (x[i] >= box.upper[i] && d[i] > 0.0)) d[i] = 0.0;
      slope = g.dot(d);
      if (!(slope < 0.0)) break;
    }

    double t = 1.0;
    bool accepted = false;
    Vec x_new;
    double f_new = fx;
    for (int k = 0; k < opt.max_backtracks && !f.exhausted(); ++k, t *= 0.5) {
      x_new = box.clamp(x + t * d);
      f_new = f(x_new);
      if (std::isfinite(f_new) && f_new <= fx + 1e-4 * g.dot(x_new - x)) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      if (++stalls >= 2) break;
      h = Eigen::MatrixXd::Identity(n, n) * 1e-3 * width.norm() / std::max(g.norm(), 1e-300);
      scaled = false;
      continue;
    }
    const double df = fx - f_new;
    const Vec s = x_new - x;
    x = x_new;
    fx = f_new;
    if (f.remaining() < 2 * n) break;
    const Vec g_new = numeric_gradient(f, x, opt.rel_step, fx, &box).gradient;
    const Vec y = g_new - g;
    g = g_new;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (!scaled) {
        h = Eigen::MatrixXd::Identity(n, n) * (sy / y.squaredNorm());
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n) - rho * s * y.transpose();
      h = v * h * v.transpose() + rho * s * s.transpose();
    }
    if (df <= opt.f_tolerance * (1.0 + std::abs(fx))) {
      if (++stalls >= 3) break;
    } else {
      stalls = 0;
    }
  }
  return f.result();
}

} // namespace occam::optim
