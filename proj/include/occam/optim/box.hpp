#pragma once

#include "occam/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace occam::optim {

using Vec = Eigen::VectorXd;

/// Axis-aligned bounds; points are clamped, never rejected.
struct Box {
  Vec lower;
  Vec upper;

  int dim() const { return static_cast<int>(lower.size()); }
  Vec width() const { return upper - lower; }

  void validate() const {
    if (lower.size() != upper.size()) throw InvalidArgument("bound vectors differ in length");
    if (!lower.allFinite() || !upper.allFinite()) throw InvalidArgument("bounds must be finite");
    if ((lower.array() >= upper.array()).any()) throw InvalidArgument("bounds need low < high");
  }

  Vec clamp(const Vec& x) const { return x.cwiseMax(lower).cwiseMin(upper); }
  bool contains(const Vec& x) const {
    return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
  }
};

struct StageResult {
  Vec x;
  double f = 0.0;
  long evaluations = 0;
};

/// Objective wrapper that counts calls and keeps the best point seen.
template <class F>
class Tracked {
public:
  Tracked(F& f, long budget) : f_(f), budget_(budget) {}

  double operator()(const Vec& x) {
    ++evals_;
    double v = f_(x);
    if (std::isnan(v)) v = std::numeric_limits<double>::infinity();
    if (v < best_f_) {
      best_f_ = v;
      best_x_ = x;
    }
    return v;
  }

  bool exhausted() const { return evals_ >= budget_; }
  long remaining() const { return std::max(0L, budget_ - evals_); }
  long evaluations() const { return evals_; }
  double best_f() const { return best_f_; }
  const Vec& best_x() const { return best_x_; }

  void seed(const Vec& x, double f) {
    if (f < best_f_ || best_x_.size() == 0) {
      best_f_ = f;
      best_x_ = x;
    }
  }

  StageResult result() const { return {best_x_, best_f_, evals_}; }

private:
  F& f_;
  long budget_;
  long evals_ = 0;
  double best_f_ = std::numeric_limits<double>::infinity();
  Vec best_x_;
};

} // namespace occam::optim
