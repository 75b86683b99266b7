#include "occam/optim/evolution.hpp"
#include "occam/optim/nelder_mead.hpp"
#include "occam/optim/numeric_gradient.hpp"
#include "occam/optim/quasi_newton.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace occam::optim;

namespace {

Box cube(int n, double lo, double hi) { return {Vec::Constant(n, lo), Vec::Constant(n, hi)}; }

struct Quadratic {
  Vec center;
  double operator()(const Vec& x) const { return (x - center).squaredNorm(); }
};

struct Rosenbrock {
  double operator()(const Vec& x) const {
    return 100.0 * std::pow(x[1] - x[0] * x[0], 2) + std::pow(1.0 - x[0], 2);
  }
};

struct Rastrigin {
  double operator()(const Vec& x) const {
    double s = 10.0 * x.size();
    for (double v : x) s += v * v - 10.0 * std::cos(2.0 * std::numbers::pi * v);
    return s;
  }
};

} // namespace

TEST(Box, ValidateAndClamp) {
  Box b = cube(2, -1.0, 1.0);
  EXPECT_NO_THROW(b.validate());
  EXPECT_EQ(b.clamp(Vec::Constant(2, 5.0)), Vec::Constant(2, 1.0));
  EXPECT_TRUE(b.contains(Vec::Zero(2)));
  b.upper[0] = -2.0;
  EXPECT_THROW(b.validate(), occam::InvalidArgument);
}

TEST(Tracked, CountsAndMapsNanToInfinity) {
  auto f = [](const Vec& x) { return x[0] < 0 ? std::nan("") : x[0]; };
  Tracked<decltype(f)> t(f, 3);
  EXPECT_TRUE(std::isinf(t(Vec::Constant(1, -1.0))));
  EXPECT_EQ(t(Vec::Constant(1, 2.0)), 2.0);
  EXPECT_EQ(t.evaluations(), 2);
  EXPECT_EQ(t.best_f(), 2.0);
  t(Vec::Constant(1, 1.0));
  EXPECT_TRUE(t.exhausted());
}

TEST(NumericGradient, MatchesAnalyticGradient) {
  Rosenbrock f;
  Vec x(2);
  x << -0.7, 1.3;
  const GradientResult g = numeric_gradient(f, x);
  const double gx = -400.0 * x[0] * (x[1] - x[0] * x[0]) - 2.0 * (1.0 - x[0]);
  const double gy = 200.0 * (x[1] - x[0] * x[0]);
  EXPECT_NEAR(g.gradient[0], gx, 1e-5 * std::abs(gx));
  EXPECT_NEAR(g.gradient[1], gy, 1e-5 * std::abs(gy));
  EXPECT_FALSE(g.any_failed());
}

TEST(NumericGradient, FallsBackToOneSidedAtInvalidRegion) {
  auto f = [](const Vec& x) { return x[0] > 1.0 ? INFINITY : x[0] * x[0]; };
  const GradientResult g = numeric_gradient(f, Vec::Constant(1, 1.0), 1e-6);
  EXPECT_TRUE(g.one_sided[0]);
  EXPECT_NEAR(g.gradient[0], 2.0, 1e-4);
}

TEST(NelderMead, SolvesBoundedQuadratic) {
  Quadratic f{Vec::LinSpaced(4, -0.5, 0.5)};
  NelderMeadOptions o;
  o.max_evaluations = 4000;
  const StageResult r = nelder_mead(f, cube(4, -2.0, 2.0), Vec::Constant(4, 1.5), o);
  EXPECT_LT(r.f, 1e-10);
  EXPECT_LE(r.evaluations, 4000);
}

TEST(NelderMead, RespectsActiveBound) {
  Quadratic f{Vec::Constant(2, 3.0)};
  const Box box = cube(2, -1.0, 1.0);
  const StageResult r = nelder_mead(f, box, Vec::Zero(2), {});
  EXPECT_TRUE(box.contains(r.x));
  EXPECT_NEAR(r.x[0], 1.0, 1e-6);
}

TEST(NelderMead, Rosenbrock) {
  Rosenbrock f;
  NelderMeadOptions o;
  o.max_evaluations = 5000;
  Vec x0(2);
  x0 << -1.2, 1.0;
  EXPECT_LT(nelder_mead(f, cube(2, -3.0, 3.0), x0, o).f, 1e-8);
}

TEST(Evolution, EscapesLocalMinimaOfRastrigin) {
  Rastrigin f;
  std::mt19937_64 rng(5);
  EvolutionOptions o;
  o.max_evaluations = 20000;
  const StageResult r = evolution_strategy(f, cube(2, -5.12, 5.12), Vec::Constant(2, 3.0), rng, o);
  EXPECT_LT(r.f, 1e-3);
}

TEST(Evolution, DeterministicForSeed) {
  Rastrigin f;
  std::mt19937_64 a(9), b(9);
  const StageResult ra = evolution_strategy(f, cube(3, -5, 5), Vec::Ones(3), a, {});
  const StageResult rb = evolution_strategy(f, cube(3, -5, 5), Vec::Ones(3), b, {});
  EXPECT_EQ(ra.x, rb.x);
  EXPECT_EQ(ra.f, rb.f);
}

TEST(QuasiNewton, ConvergesOnIllConditionedQuadratic) {
  auto f = [](const Vec& x) { return 1000.0 * x[0] * x[0] + 0.01 * std::pow(x[1] - 2.0, 2) + x[2] * x[2]; };
  QuasiNewtonOptions o;
  o.max_evaluations = 3000;
  const StageResult r = quasi_newton(f, cube(3, -10.0, 10.0), Vec::Constant(3, 5.0), o);
  EXPECT_LT(r.f, 1e-8);
}

TEST(QuasiNewton, StopsOnBoundWithOutwardGradient) {
  Quadratic f{Vec::Constant(2, -5.0)};
  const Box box = cube(2, 0.0, 1.0);
  const StageResult r = quasi_newton(f, box, Vec::Constant(2, 0.5), {});
  EXPECT_TRUE(box.contains(r.x));
  EXPECT_NEAR(r.x[0], 0.0, 1e-8);
  EXPECT_NEAR(r.x[1], 0.0, 1e-8);
}
