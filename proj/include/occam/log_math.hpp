#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>

namespace occam {

inline constexpr double kLogSqrtTwoPi = 0.91893853320467274178;  // log(sqrt(2 pi))
inline constexpr double kInvSqrtTwo = 0.70710678118654752440;
inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// log(sum_i exp(v_i)), expanded around the largest term so that far-tail
/// points (all exponents below ~-700) keep a finite value.
inline double log_sum_exp(std::span<const double> v) {
  if (v.empty()) return kNegInf;
  const double top = *std::max_element(v.begin(), v.end());
  if (!std::isfinite(top)) return top;  // all -inf, or a +inf/nan term
  double acc = 0.0;
  for (double t : v) acc += std::exp(t - top);
  return top + std::log(acc);
}

inline double log_normal_pdf(double x, double mean, double log_sigma) {
  const double z = (x - mean) * std::exp(-log_sigma);
  return -kLogSqrtTwoPi - log_sigma - 0.5 * z * z;
}

/// Both tails of the standard normal CDF, each accurate in its own tail.
struct NormalTails {
  double lower;  // Phi(z)
  double upper;  // 1 - Phi(z)
};

inline NormalTails normal_tails(double z) {
  if (z < 0.0) {
    const double lo = 0.5 * std::erfc(-z * kInvSqrtTwo);
    return {lo, 1.0 - lo};
  }
  const double up = 0.5 * std::erfc(z * kInvSqrtTwo);
  return {1.0 - up, up};
}

/// Phi(z_a) - Phi(z_b) without cancellation when both sit in the same tail.
inline double cdf_difference(double z_a, const NormalTails& a, double z_b, const NormalTails& b) {
  if (z_a + z_b > 0.0) return b.upper - a.upper;
  return a.lower - b.lower;
}

} // namespace occam
