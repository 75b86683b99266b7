#pragma once

#include "occam/optim/box.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace occam::optim {

struct GradientResult {
  Vec gradient;
  std::vector<bool> one_sided;  // fell back to a one-sided difference
  std::vector<bool> failed;     // both sides invalid; coordinate reported as 0
  long evaluations = 0;

  bool any_failed() const { return std::any_of(failed.begin(), failed.end(), [](bool b) { return b; }); }
};

/// Central differences with step rel_step * max(|x_k|, 1). When one side is
/// non-finite, or would leave the optional box, the other one-sided
/// difference is used.
template <class F>
GradientResult numeric_gradient(F&& objective, const Vec& x, double rel_step = 1e-6, double f0 = NAN,
                                const Box* box = nullptr) {
  const int n = static_cast<int>(x.size());
  GradientResult out{Vec::Zero(n), std::vector<bool>(n, false), std::vector<bool>(n, false), 0};
  if (std::isnan(f0)) {
    f0 = objective(x);
    ++out.evaluations;
  }
  Vec p = x;
  for (int k = 0; k < n; ++k) {
    const double h = rel_step * std::max(std::abs(x[k]), 1.0);
    const bool in_p = !box || x[k] + h <= box->upper[k];
    const bool in_m = !box || x[k] - h >= box->lower[k];
    double fp = NAN, fm = NAN;
    if (in_p) {
      p[k] = x[k] + h;
      fp = objective(p);
      ++out.evaluations;
    }
    if (in_m) {
      p[k] = x[k] - h;
      fm = objective(p);
      ++out.evaluations;
    }
    p[k] = x[k];
    const bool ok_p = std::isfinite(fp), ok_m = std::isfinite(fm), ok_0 = std::isfinite(f0);
    if (ok_p && ok_m) {
      out.gradient[k] = (fp - fm) / (2.0 * h);
    } else if (ok_p && ok_0) {
      out.gradient[k] = (fp - f0) / h;
      out.one_sided[k] = true;
    } else if (ok_m && ok_0) {
      out.gradient[k] = (f0 - fm) / h;
      out.one_sided[k] = true;
    } else {
      out.failed[k] = true;
    }
  }
  return out;
}

} // namespace occam::optim
