#pragma once

// Shared helpers for the test suites: random models and independent oracles
// (direct mixture formulas, quadrature, finite differences).

#include "occam/occam.hpp"

#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace occam::testing {

inline MixtureParams random_params(std::mt19937_64& rng, int n_comp, int n_dim, AmplitudeScheme scheme) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MixtureParams p;
  p.scheme = scheme;
  p.means.resize(n_comp, n_dim);
  p.log_widths.resize(n_comp, n_dim);
  for (int i = 0; i < n_comp; ++i)
    for (int d = 0; d < n_dim; ++d) {
      p.means(i, d) = 1.5 * u(rng);
      p.log_widths(i, d) = 0.5 * u(rng);
    }
  const int na = amplitude_count(scheme, n_comp);
  p.amp_raw.resize(na);
  for (int j = 0; j < na; ++j)
    p.amp_raw[j] = scheme == AmplitudeScheme::SquaredNorm ? 0.3 + std::abs(u(rng)) : 0.2 + 0.5 * (u(rng) + 1.0);
  return p;
}

inline std::vector<double> random_point(std::mt19937_64& rng, int n_dim) {
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<double> x(static_cast<std::size_t>(n_dim));
  for (auto& v : x) v = u(rng);
  return x;
}

inline Dataset random_dataset(std::mt19937_64& rng, int n, int n_dim, double spread = 1.0) {
  std::normal_distribution<double> g(0.0, spread);
  RowMatrix pts(n, n_dim);
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < n_dim; ++d) pts(i, d) = g(rng);
  return Dataset(std::move(pts));
}

/// Mixture density from the textbook formula, no shared code with the encoder.
inline double direct_pdf(const MixtureParams& p, const std::vector<double>& x) {
  const Vector w = p.component_weights();
  double f = 0.0;
  for (int i = 0; i < p.n_components(); ++i) {
    double c = w[i];
    for (int d = 0; d < p.n_dim(); ++d) {
      const double s = std::exp(p.log_widths(i, d));
      const double z = (x[d] - p.means(i, d)) / s;
      c *= std::exp(-0.5 * z * z) / (s * std::sqrt(2.0 * M_PI));
    }
    f += c;
  }
  return f;
}

/// 1D mixture CDF, sum_i a_i Phi((x - m_i) / s_i).
inline double direct_cdf_1d(const MixtureParams& p, double x) {
  const Vector w = p.component_weights();
  double F = 0.0;
  for (int i = 0; i < p.n_components(); ++i) {
    const double s = std::exp(p.log_widths(i, 0));
    F += w[i] * 0.5 * std::erfc(-(x - p.means(i, 0)) / (s * std::sqrt(2.0)));
  }
  return F;
}

/// Adaptive Simpson on [a, b].
inline double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-12,
                        int depth = 50) {
  const std::function<double(double, double, double, double, double, double, int)> rec =
      [&](double lo, double hi, double flo, double fmid, double fhi, double whole, int d) -> double {
    const double mid = 0.5 * (lo + hi);
    const double lm = 0.5 * (lo + mid), rm = 0.5 * (mid + hi);
    const double flm = f(lm), frm = f(rm);
    const double left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
    const double right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
    if (d <= 0 || std::abs(left + right - whole) <= 15.0 * tol) return left + right + (left + right - whole) / 15.0;
    return rec(lo, mid, flo, flm, fmid, left, d - 1) + rec(mid, hi, fmid, frm, fhi, right, d - 1);
  };
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return rec(a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), depth);
}

/// Central finite-difference Jacobian of a vector map.
inline Matrix fd_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x, double h = 1e-6) {
  const Vector f0 = f(x);
  Matrix J(f0.size(), x.size());
  for (int k = 0; k < x.size(); ++k) {
    Vector a = x, b = x;
    const double step = h * std::max(1.0, std::abs(x[k]));
    a[k] += step;
    b[k] -= step;
    J.col(k) = (f(a) - f(b)) / (2.0 * step);
  }
  return J;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

} // namespace occam::testing
