#include "occam/log_math.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

using namespace occam;

TEST(LogSumExp, MatchesNaiveSumInRange) {
  const std::vector<double> v{-1.0, 0.5, 2.0, -3.0};
  double naive = 0.0;
  for (double t : v) naive += std::exp(t);
  EXPECT_NEAR(log_sum_exp(v), std::log(naive), 1e-14);
}

TEST(LogSumExp, StaysFiniteFarBelowUnderflow) {
  const std::vector<double> v{-1000.0, -1001.0};
  EXPECT_NEAR(log_sum_exp(v), -1000.0 + std::log1p(std::exp(-1.0)), 1e-12);
}

TEST(LogSumExp, EmptyAndAllNegativeInfinity) {
  EXPECT_EQ(log_sum_exp(std::vector<double>{}), kNegInf);
  EXPECT_EQ(log_sum_exp(std::vector<double>{kNegInf, kNegInf}), kNegInf);
}

TEST(LogNormalPdf, MatchesClosedForm) {
  const double x = 0.7, m = -0.2, s = 1.3;
  const double expect = std::log(std::exp(-0.5 * std::pow((x - m) / s, 2)) / (s * std::sqrt(2.0 * M_PI)));
  EXPECT_NEAR(log_normal_pdf(x, m, std::log(s)), expect, 1e-14);
}

TEST(NormalTails, AccurateInBothTails) {
  for (double z : {-30.0, -8.0, -1.0, 0.0, 1.0, 8.0, 30.0}) {
    const NormalTails t = normal_tails(z);
    const long double lo = 0.5L * std::erfc(-static_cast<long double>(z) / std::sqrt(2.0L));
    const long double up = 0.5L * std::erfc(static_cast<long double>(z) / std::sqrt(2.0L));
    if (lo > 0) EXPECT_LT(std::abs(t.lower - static_cast<double>(lo)) / static_cast<double>(lo), 1e-13) << z;
    if (up > 0) EXPECT_LT(std::abs(t.upper - static_cast<double>(up)) / static_cast<double>(up), 1e-13) << z;
  }
}

TEST(CdfDifference, NoCancellationInUpperTail) {
  const double za = 9.5, zb = 9.0;
  const double d = cdf_difference(za, normal_tails(za), zb, normal_tails(zb));
  const long double expect = 0.5L * (std::erfc(9.0L / std::sqrt(2.0L)) - std::erfc(9.5L / std::sqrt(2.0L)));
  EXPECT_LT(std::abs(d - static_cast<double>(expect)) / static_cast<double>(expect), 1e-12);
  EXPECT_GT(d, 0.0);
}

TEST(CdfDifference, Antisymmetric) {
  const double a = -0.3, b = 1.1;
  EXPECT_DOUBLE_EQ(cdf_difference(a, normal_tails(a), b, normal_tails(b)),
                   -cdf_difference(b, normal_tails(b), a, normal_tails(a)));
}
