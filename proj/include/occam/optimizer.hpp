#pragma once

// Fitting a mixture by minimizing Q. The outer search runs over the flattened
// parameters with a four-stage chain (simplex from an EM-refined start,
// evolutionary global search, simplex refinement, quasi-Newton polish).
// For each candidate the truncation ranges Delta m are solved exactly, since
// Q is convex in log Delta m once the parameters are fixed.

#include "occam/bit_cost.hpp"
#include "occam/errors.hpp"
#include "occam/mixture_model.hpp"
#include "occam/optim/box.hpp"
#include "occam/optim/evolution.hpp"
#include "occam/optim/nelder_mead.hpp"
#include "occam/optim/numeric_gradient.hpp"
#include "occam/optim/quasi_newton.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace occam {

using optim::numeric_gradient;
using optim::GradientResult;

enum class Objective {
  BitCount,        // Q = Q_l + Q_delta + Q_r
  LikelihoodOnly,  // Q_l alone (unregularized maximum likelihood)
};

struct FitConfig {
  int max_components = 5;
  std::array<long, 4> stage_budgets{6000, 3000, 3000, 3000};
  std::optional<optim::Box> bounds;  // parameters, optionally followed by log delta m; data-driven when empty
  std::uint64_t seed = 1;
  QMode mode = QMode::Global;
  AmplitudeScheme scheme = AmplitudeScheme::SquaredNorm;
  double significant_amplitude = 0.01;
  double min_width_fraction = 1e-6;
  double delta_x = 1.0;
  Objective objective = Objective::BitCount;
  int em_iterations = 200;  // likelihood sweeps applied to the seeded start

  void validate() const {
    if (max_components < 1) throw InvalidArgument("max_components must be at least 1");
    for (long b : stage_budgets)
      if (b <= 0) throw InvalidArgument("stage budgets must be positive");
    if (!(significant_amplitude > 0.0 && significant_amplitude < 1.0))
      throw InvalidArgument("significant_amplitude must lie in (0, 1)");
    if (!(min_width_fraction > 0.0)) throw InvalidArgument("min_width_fraction must be positive");
    if (!(delta_x > 0.0)) throw InvalidArgument("delta_x must be positive");
    if (bounds) bounds->validate();
  }

  /// FNV-1a over a canonical rendering; recorded as fit provenance.
  std::uint64_t hash() const {
    std::ostringstream os;
    os.precision(17);
    os << max_components << '|' << stage_budgets[0] << ',' << stage_budgets[1] << ',' << stage_budgets[2]
       << ',' << stage_budgets[3] << '|' << seed << '|' << to_string(mode) << '|' << to_string(scheme) << '|'
       << significant_amplitude << '|' << min_width_fraction << '|' << delta_x << '|'
       << static_cast<int>(objective) << '|' << em_iterations;
    if (bounds) {
      for (double v : bounds->lower) os << ',' << v;
      for (double v : bounds->upper) os << ',' << v;
    }
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : os.str()) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    return h;
  }
};

struct FitProvenance {
  std::uint64_t seed = 0;
  std::uint64_t config_hash = 0;
  long evaluations = 0;
};

struct FitResult {
  MixtureParams params;
  DeltaM delta_m;
  QBreakdown q;
  std::vector<double> stage_history;  // best Q after each stage
  std::vector<int> pruned;            // component indices removed by prune()
  bool valid = false;
  bool runaway_width = false;
  QMode mode = QMode::Global;
  double delta_x = 1.0;
  FitProvenance provenance;

  int significant_components(double threshold) const {
    const Vector w = params.component_weights();
    return static_cast<int>((w.array() > threshold).count());
  }
};

namespace detail {

inline Vector data_range(const Dataset& data) {
  Vector r = data.column_max() - data.column_min();
  for (int d = 0; d < r.size(); ++d)
    if (!(r[d] > 0.0)) r[d] = 1.0;
  return r;
}

} // namespace detail

/// Data-driven box over the joint vector: means within the data range padded by
/// half the range, log widths in [log(1e-4 range), log(2 range)], raw amplitudes
/// in [-10, 10] (angles in [0, 2 pi]), log Delta m in [log(1e-12 dx), log min(1, dx)].
inline optim::Box default_bounds(const Dataset& data, const ParamLayout& l, double delta_x = 1.0,
                                 bool with_delta_m = true) {
  const Vector lo = data.column_min(), hi = data.column_max(), range = detail::data_range(data);
  const int np = l.n_params();
  const int n = with_delta_m ? 2 * np : np;
  optim::Box box{optim::Vec(n), optim::Vec(n)};
  for (int j = 0; j < l.n_amp(); ++j) {
    if (l.scheme == AmplitudeScheme::SquaredNorm) {
      box.lower[l.amp(j)] = -10.0;
      box.upper[l.amp(j)] = 10.0;
    } else {
      box.lower[l.amp(j)] = 0.0;
      box.upper[l.amp(j)] = 2.0 * std::numbers::pi;
    }
  }
  for (int i = 0; i < l.n_components; ++i)
    for (int d = 0; d < l.n_dim; ++d) {
      box.lower[l.mean(i, d)] = lo[d] - 0.5 * range[d];
      box.upper[l.mean(i, d)] = hi[d] + 0.5 * range[d];
      box.lower[l.log_width(i, d)] = std::log(1e-4 * range[d]);
      box.upper[l.log_width(i, d)] = std::log(2.0 * range[d]);
    }
  if (with_delta_m) {
    for (int k = 0; k < np; ++k) {
      box.lower[np + k] = std::log(1e-12 * delta_x);
      box.upper[np + k] = std::log(std::min(1.0, delta_x));
    }
  }
  return box;
}

/// k-means++ seeded means, widths at the per-dimension sample deviation over
/// n_a, equal amplitudes.
inline MixtureParams initial_params(const Dataset& data, int n_components, AmplitudeScheme scheme,
                                    std::mt19937_64& rng) {
  const int n = data.size(), n_dim = data.n_dim();
  MixtureParams p;
  p.scheme = scheme;
  p.means.resize(n_components, n_dim);
  p.log_widths.resize(n_components, n_dim);

  std::uniform_int_distribution<int> first(0, n - 1);
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  int pick = first(rng);
  for (int c = 0; c < n_components; ++c) {
    for (int d = 0; d < n_dim; ++d) p.means(c, d) = data.points(pick, d);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      const double dist = (data.points.row(i) - p.means.row(c)).squaredNorm();
      d2[i] = std::min(d2[i], dist);
      total += d2[i];
    }
    if (total > 0.0) {
      std::discrete_distribution<int> next(d2.begin(), d2.end());
      pick = next(rng);
    } else {
      pick = first(rng);
    }
  }

  const Vector sd = data.column_stddev(), range = detail::data_range(data);
  for (int c = 0; c < n_components; ++c)
    for (int d = 0; d < n_dim; ++d) {
      const double s = sd[d] > 0.0 ? sd[d] : 0.1 * range[d];
      p.log_widths(c, d) = std::log(s / n_components);
    }
  if (scheme == AmplitudeScheme::SquaredNorm)
    p.amp_raw = Vector::Ones(n_components);
  else
    p.amp_raw = angles_from_weights(Vector::Constant(n_components, 1.0 / n_components));
  return p;
}

/// A few expectation-maximization sweeps of the plain likelihood, used only to
/// move the seeded start near a sensible mixture before Q is minimized.
inline MixtureParams em_refine(const Dataset& data, MixtureParams p, int iterations) {
  const int n = data.size(), k = p.n_components(), d = p.n_dim();
  const Vector range = detail::data_range(data);
  Vector w = p.component_weights();
  Matrix resp(n, k);
  Vector logs(k);
  for (int it = 0; it < iterations; ++it) {
    for (int i = 0; i < n; ++i) {
      for (int c = 0; c < k; ++c) {
        double acc = std::log(std::max(w[c], 1e-300));
        for (int m = 0; m < d; ++m) acc += log_normal_pdf(data.points(i, m), p.means(c, m), p.log_widths(c, m));
        logs[c] = acc;
      }
      const double lse = log_sum_exp({logs.data(), static_cast<std::size_t>(k)});
      resp.row(i) = (logs.array() - lse).exp().transpose();
    }
    for (int c = 0; c < k; ++c) {
      const double nk = resp.col(c).sum();
      w[c] = std::max(nk / n, 1e-6);
      if (nk < 1e-8) continue;
      for (int m = 0; m < d; ++m) {
        const double mean = resp.col(c).dot(data.points.col(m)) / nk;
        const double var = resp.col(c).dot((data.points.col(m).array() - mean).square().matrix()) / nk;
        p.means(c, m) = mean;
        p.log_widths(c, m) = 0.5 * std::log(std::max(var, 1e-6 * range[m] * range[m]));
      }
    }
    w /= w.sum();
  }
  if (p.scheme == AmplitudeScheme::SquaredNorm)
    p.amp_raw = w.cwiseSqrt();
  else
    p.amp_raw = angles_from_weights(w);
  return p;
}

/// Starting points for a K-slot fit: for every k = 1..K, `restarts` seeded
/// k-component EM fits, padded to K slots with parked components of
/// negligible weight.
inline std::vector<MixtureParams> initial_candidates(const Dataset& data, int max_components, AmplitudeScheme scheme,
                                                     int em_iterations, std::mt19937_64& rng, int restarts = 1) {
  constexpr double kParkedWeight = 1e-6;
  const Vector mean = data.column_mean(), sd = data.column_stddev(), range = detail::data_range(data);
  std::vector<MixtureParams> out;
  for (int k = 1; k <= max_components; ++k) {
    for (int r = 0; r < (k == 1 ? 1 : restarts); ++r) {
      MixtureParams p = initial_params(data, k, scheme, rng);
      if (em_iterations > 0) p = em_refine(data, p, em_iterations);
      const Vector w = p.component_weights();
      MixtureParams full;
      full.scheme = scheme;
      full.means.resize(max_components, data.n_dim());
      full.log_widths.resize(max_components, data.n_dim());
      Vector wf = Vector::Constant(max_components, kParkedWeight);
      for (int c = 0; c < max_components; ++c)
        for (int d = 0; d < data.n_dim(); ++d) {
          full.means(c, d) = c < k ? p.means(c, d) : mean[d];
          full.log_widths(c, d) = c < k ? p.log_widths(c, d) : std::log(sd[d] > 0.0 ? sd[d] : 0.1 * range[d]);
        }
      wf.head(k) = w;
      wf /= wf.sum();
      full.amp_raw = scheme == AmplitudeScheme::SquaredNorm ? Vector(wf.cwiseSqrt()) : angles_from_weights(wf);
      out.push_back(std::move(full));
    }
  }
  return out;
}

/// Births for a fitted mixture: the first slot below the significance threshold
/// (else the lightest one) is moved onto one of the worst-explained data points with a narrow width
/// and the weight of a single point; the others are rescaled to keep the total.
inline std::vector<MixtureParams> birth_candidates(const Dataset& data, const MixtureParams& p,
                                                   double significant_amplitude, int max_points) {
  const Vector w = p.component_weights();
  int slot = -1;
  for (int c = 0; c < w.size() && slot < 0; ++c)
    if (w[c] < significant_amplitude) slot = c;
  if (slot < 0) w.minCoeff(&slot);  // no spare slot: try reassigning the lightest one

  const int n = data.size();
  const PreparedMixture pm(p);
  Vector scratch;
  std::vector<std::pair<double, int>> density;
  for (int i = 0; i < n; ++i) density.emplace_back(log_pdf(data.row(i), pm, scratch), i);
  const int m = std::min(n, max_points);
  std::partial_sort(density.begin(), density.begin() + m, density.end());

  const Vector sd = data.column_stddev(), range = detail::data_range(data);
  const double w_new = std::min(0.5, 1.0 / n);
  std::vector<MixtureParams> out;
  for (int k = 0; k < m; ++k)
    for (double frac : {1e-3, 1e-2, 1e-1}) {
      MixtureParams q = p;
      Vector wq = w;
      wq[slot] = 0.0;
      wq *= (1.0 - w_new) / wq.sum();
      wq[slot] = w_new;
      for (int d = 0; d < data.n_dim(); ++d) {
        q.means(slot, d) = data.points(density[static_cast<std::size_t>(k)].second, d);
        q.log_widths(slot, d) = std::log(frac * (sd[d] > 0.0 ? sd[d] : 0.1 * range[d]));
      }
      q.amp_raw = p.scheme == AmplitudeScheme::SquaredNorm ? Vector(wq.cwiseSqrt()) : angles_from_weights(wq);
      out.push_back(std::move(q));
    }
  return out;
}

struct RepairResult {
  DeltaM delta_m;
  double scale = 1.0;           // applied uniform factor
  double boundary_scale = 1.0;  // largest factor keeping Q finite (bisection)
  QBreakdown q_before;
  QBreakdown q_after;
};

/// Shrinks every Delta m_k by one common factor until Q is finite on new data.
/// The validity boundary is found by bisection on s in [1e-12, 1]; the returned
/// factor minimizes Q over the valid interval (0, boundary], since Q diverges at
/// the boundary itself.
inline RepairResult repair_delta_m(const Dataset& data, const MixtureParams& params, const DeltaM& delta_m,
                                   QOptions opts = {}) {
  const QEvaluator eval(data, opts);
  RepairResult out{delta_m, 1.0, 1.0, eval(params, delta_m), {}};
  if (out.q_before.valid) {
    out.q_after = out.q_before;
    return out;
  }
  const auto q_at = [&](double s) { return eval.total(params, delta_m.scaled(s)); };
  double lo = 1e-12, hi = 1.0;
  if (!std::isfinite(q_at(lo))) throw IrreparableError("Q stays infinite even with delta m scaled by 1e-12");
  for (int it = 0; it < 40; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (std::isfinite(q_at(mid)))
      lo = mid;
    else
      hi = mid;
  }
  out.boundary_scale = lo;

  // Q(s) is convex in log s on the valid interval: golden-section search.
  double a = std::log(1e-12), b = std::log(lo);
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = q_at(std::exp(c)), fd = q_at(std::exp(d));
  for (int it = 0; it < 80 && (b - a) > 1e-9; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = q_at(std::exp(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = q_at(std::exp(d));
    }
  }
  double best = std::exp(0.5 * (a + b));
  if (!(q_at(best) <= q_at(lo))) best = lo;
  out.scale = best;
  out.delta_m = delta_m.scaled(best);
  out.q_after = eval(params, out.delta_m);
  return out;
}

/// Components whose width collapsed below the floor while still carrying a
/// significant amplitude.
inline std::vector<int> runaway_components(const MixtureParams& p, const Dataset& data, double significant_amplitude,
                                           double min_width_fraction) {
  const Vector w = p.component_weights(), range = detail::data_range(data);
  const Matrix widths = p.widths();
  std::vector<int> out;
  for (int i = 0; i < p.n_components(); ++i) {
    bool thin = false;
    for (int d = 0; d < p.n_dim(); ++d) thin = thin || widths(i, d) < min_width_fraction * range[d];
    if (thin && w[i] >= significant_amplitude) out.push_back(i);
  }
  return out;
}

namespace detail {

struct DeltaMSolution {
  DeltaM delta_m;
  double q_l = kInf;
  double cost = kInf;  // q_delta + q_r at the optimum, +inf when no valid choice exists
  int iterations = 0;
};

/// For fixed mixture parameters, the truncation ranges minimizing
/// q_delta + q_r. Each b_{i mu} is linear in Delta m, so in t = log Delta m the
/// problem is convex (log-sum-exp inside increasing convex functions); a
/// projected Newton method with backtracking solves it to machine precision.
class DeltaMSolver {
public:
  DeltaMSolver(const Dataset& data, QOptions opts) : data_(&data), opts_(opts) {}

  DeltaMSolution solve(const MixtureParams& params, const Vector& lower, const Vector& upper) const {
    const Dataset& data = *data_;
    const int n = data.size(), d = data.n_dim(), np = params.n_params();
    DeltaMSolution out;
    const PreparedMixture pm(params);
    abs_y_.resize(static_cast<Eigen::Index>(n) * d, np);
    double q_l = 0.0;
    for (int i = 0; i < n; ++i) {
      encode_into(data.row(i), pm, ws_, ev_);
      q_l -= ev_.log_pdf;
      if (!ev_.jac_x.allFinite() || !ev_.jac_m.allFinite() || !(ev_.jac_x.diagonal().array() > 0.0).all())
        return out;
      abs_y_.middleRows(static_cast<Eigen::Index>(i) * d, d) =
          ev_.jac_x.triangularView<Eigen::Lower>().solve(ev_.jac_m).cwiseAbs();
    }
    if (!std::isfinite(q_l)) return out;
    out.q_l = q_l;

    // Fixed start, shifted down until feasible: the result is a pure function of the parameters.
    Vector t = (Vector::Constant(np, std::log(1e-3 * opts_.delta_x))).cwiseMax(lower).cwiseMin(upper);
    double f = cost(t, nullptr, nullptr);
    for (int k = 0; k < 80 && !std::isfinite(f); ++k) {
      t = (t.array() - std::log(2.0)).matrix().cwiseMax(lower);
      f = cost(t, nullptr, nullptr);
    }
    if (!std::isfinite(f)) return out;

    Vector g(np), step(np);
    Matrix h(np, np);
    int it = 0;
    for (; it < 100; ++it) {
      cost(t, &g, &h);
      std::vector<int> free;
      for (int k = 0; k < np; ++k) {
        const bool pinned_lo = t[k] <= lower[k] && g[k] > 0.0;
        const bool pinned_hi = t[k] >= upper[k] && g[k] < 0.0;
        if (!pinned_lo && !pinned_hi) free.push_back(k);
      }
      if (free.empty()) break;
      const int m = static_cast<int>(free.size());
      Matrix hf(m, m);
      Vector gf(m);
      for (int a = 0; a < m; ++a) {
        gf[a] = g[free[a]];
        for (int b = 0; b < m; ++b) hf(a, b) = h(free[a], free[b]);
      }
      if (gf.cwiseAbs().maxCoeff() < 1e-12) break;
      hf.diagonal().array() += 1e-12 * std::max(1.0, hf.diagonal().cwiseAbs().maxCoeff());
      Eigen::LDLT<Matrix> ldlt(hf);
      Vector df = ldlt.solve(-gf);
      if (!df.allFinite() || gf.dot(df) >= 0.0) df = -gf;
      step.setZero();
      for (int a = 0; a < m; ++a) step[free[a]] = df[a];

      double alpha = 1.0, f_new = kInf;
      Vector t_new = t;
      for (int bt = 0; bt < 60; ++bt, alpha *= 0.5) {
        t_new = (t + alpha * step).cwiseMax(lower).cwiseMin(upper);
        f_new = cost(t_new, nullptr, nullptr);
        if (std::isfinite(f_new) && f_new <= f + 1e-4 * g.dot(t_new - t)) break;
      }
      if (!(f_new < f)) break;
      const double gain = f - f_new;
      t = t_new;
      f = f_new;
      if (gain < 1e-13 * std::max(1.0, std::abs(f))) break;
    }
    out.delta_m = DeltaM{t};
    out.cost = f;
    out.iterations = it;
    return out;
  }

private:
  /// q_delta + q_r at t = log Delta m, with optional gradient and Hessian.
  double cost(const Vector& t, Vector* grad, Matrix* hess) const {
    const int n = data_->size(), d = data_->n_dim(), np = static_cast<int>(t.size());
    const Vector e = t.array().exp().matrix();
    b_ = (abs_y_ * e).cwiseMax(1e-300);
    const double log_dx = std::log(opts_.delta_x);
    double value = -t.sum();
    // s = log b; per point (Local) or overall (Global) the regularizer is
    // rho(mean s) = -log(1 - n_dim exp(mean s - log dx)) up to constants.
    const Vector s = b_.array().log().matrix();
    Vector weight(b_.size());   // dR/ds per row
    Vector curv;                // second-derivative coefficient per group
    if (opts_.mode == QMode::Local) {
      curv.resize(n);
      for (int i = 0; i < n; ++i) {
        const double g = std::exp(s.segment(static_cast<Eigen::Index>(i) * d, d).mean() - log_dx);
        const double arg = 1.0 - d * g;
        if (!(arg > 0.0)) return kInf;
        value += -d * log_dx - std::log(arg);
        weight.segment(static_cast<Eigen::Index>(i) * d, d).setConstant(g / arg);
        curv[i] = g / (arg * arg) / d;
      }
    } else {
      const double nn = static_cast<double>(n) * d;
      const double g = std::exp(s.sum() / nn - log_dx);
      const double arg = 1.0 - d * g;
      if (!(arg > 0.0)) return kInf;
      value += -static_cast<double>(n) * (d * log_dx + std::log(arg));
      weight.setConstant(g / arg);
      curv.setConstant(1, n * d * g / (arg * arg) / (nn * nn));
    }
    if (!grad) return value;

    // Row r of p holds d s_r / d t = |Y_r| e / b_r; its Jacobian is diag(p_r) - p_r p_r^T.
    p_ = (abs_y_.array().rowwise() * e.transpose().array()).colwise() / b_.array();
    const Vector wsum = p_.transpose() * weight;
    *grad = wsum - Vector::Ones(np);
    *hess = Matrix(wsum.asDiagonal());
    hess->noalias() -= p_.transpose() * weight.asDiagonal() * p_;
    if (opts_.mode == QMode::Local) {
      group_.resize(n, np);
      for (int i = 0; i < n; ++i) group_.row(i) = p_.middleRows(static_cast<Eigen::Index>(i) * d, d).colwise().sum();
      hess->noalias() += group_.transpose() * curv.asDiagonal() * group_;
    } else {
      const Vector total = p_.colwise().sum().transpose();
      hess->noalias() += curv[0] * total * total.transpose();
    }
    return value;
  }

  const Dataset* data_;
  QOptions opts_;
  mutable EncoderWorkspace ws_;
  mutable EncoderEval ev_;
  mutable Matrix abs_y_;
  mutable Vector b_;
  mutable Matrix p_, group_;
};

/// Convenience wrapper with the default bounds on log Delta m.
inline DeltaMSolution optimal_delta_m(const Dataset& data, const MixtureParams& params, QOptions opts = {}) {
  const int np = params.n_params();
  const Vector lo = Vector::Constant(np, std::log(1e-12 * opts.delta_x));
  const Vector hi = Vector::Constant(np, std::log(std::min(1.0, opts.delta_x)));
  return DeltaMSolver(data, opts).solve(params, lo, hi);
}

/// Objective over the mixture parameters alone. For the bit-count objective
/// the truncation ranges are profiled out by the exact inner solve.
class ProfiledObjective {
public:
  ProfiledObjective(const Dataset& data, ParamLayout layout, QOptions opts, Objective kind, Vector dm_lower,
                    Vector dm_upper)
      : data_(&data), solver_(data, opts), layout_(layout), kind_(kind), lo_(std::move(dm_lower)),
        hi_(std::move(dm_upper)) {}

  MixtureParams params(const optim::Vec& z) const {
    return MixtureParams::unflatten(layout_, {z.data(), static_cast<std::size_t>(layout_.n_params())});
  }

  DeltaMSolution solve(const optim::Vec& z) const { return solver_.solve(params(z), lo_, hi_); }

  double operator()(const optim::Vec& z) const {
    try {
      if (kind_ == Objective::LikelihoodOnly) {
        const PreparedMixture pm(params(z));
        double q = 0.0;
        for (int i = 0; i < data_->size(); ++i) q -= log_pdf(data_->row(i), pm, scratch_);
        return std::isfinite(q) ? q : kInf;
      }
      const DeltaMSolution s = solve(z);
      const double q = s.q_l + s.cost;
      return std::isfinite(q) ? q : kInf;
    } catch (const Error&) {
      return kInf;
    }
  }

private:
  const Dataset* data_;
  DeltaMSolver solver_;
  ParamLayout layout_;
  Objective kind_;
  Vector lo_, hi_;
  mutable Vector scratch_;
};

} // namespace detail

inline FitResult fit(const Dataset& data, const FitConfig& config) {
  config.validate();
  const QOptions qopts{config.mode, config.delta_x};
  const ParamLayout pl{config.scheme, config.max_components, data.n_dim()};
  const int np = pl.n_params();
  const bool bitcount = config.objective == Objective::BitCount;
  // User bounds may cover the parameters alone or the parameters followed by log Delta m.
  const optim::Box full = config.bounds ? *config.bounds : default_bounds(data, pl, config.delta_x, true);
  if (full.dim() != np && full.dim() != 2 * np)
    throw InvalidArgument("bounds must cover the parameters, optionally followed by log Delta m");
  const optim::Box box{full.lower.head(np), full.upper.head(np)};
  const optim::Box dm_default = default_bounds(data, pl, config.delta_x, true);
  const Vector dm_lo = full.dim() == 2 * np ? full.lower.tail(np) : dm_default.lower.tail(np);
  const Vector dm_hi = full.dim() == 2 * np ? full.upper.tail(np) : dm_default.upper.tail(np);

  std::mt19937_64 rng(config.seed);
  detail::ProfiledObjective objective(data, pl, qopts, config.objective, dm_lo, dm_hi);
  long evals = 0;
  std::vector<double> history;

  constexpr double kLiveWeight = 1e-4;
  // Stage 1: every EM start is scored; the best few get a local simplex plus
  // quasi-Newton polish and the best result moves on.
  constexpr int kRestarts = 4;
  std::vector<std::pair<double, optim::Vec>> starts;
  for (const MixtureParams& c :
       initial_candidates(data, config.max_components, config.scheme, config.em_iterations, rng, kRestarts)) {
    optim::Vec zc = box.clamp(c.flatten());
    starts.emplace_back(objective(zc), std::move(zc));
    ++evals;
  }
  std::stable_sort(starts.begin(), starts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  starts.resize(std::min<std::size_t>(starts.size(), static_cast<std::size_t>(config.max_components)));
  const long share = std::max<long>(2, config.stage_budgets[0] / 2 / static_cast<long>(starts.size()));
  // Local polish over the coordinates of live components only; parked
  // components sit on a flat plateau and would only dilute the search.
  const auto polish = [&](optim::Vec zc, long budget) {
    const MixtureParams pc = objective.params(zc);
    const Vector w = pc.component_weights();
    std::vector<int> free;
    for (int j = 0; j < pl.n_amp(); ++j)
      if (pl.scheme == AmplitudeScheme::Hyperspherical || w[j] >= kLiveWeight) free.push_back(pl.amp(j));
    for (int c = 0; c < pl.n_components; ++c)
      if (w[c] >= kLiveWeight)
        for (int d = 0; d < pl.n_dim; ++d) {
          free.push_back(pl.mean(c, d));
          free.push_back(pl.log_width(c, d));
        }
    const int m = static_cast<int>(free.size());
    optim::Box sub{optim::Vec(m), optim::Vec(m)};
    optim::Vec y(m);
    for (int k = 0; k < m; ++k) {
      sub.lower[k] = box.lower[free[k]];
      sub.upper[k] = box.upper[free[k]];
      y[k] = zc[free[k]];
    }
    const auto embed = [&](const optim::Vec& v) {
      optim::Vec full = zc;
      for (int k = 0; k < m; ++k) full[free[k]] = v[k];
      return full;
    };
    const auto restricted = [&](const optim::Vec& v) { return objective(embed(v)); };
    double fc = restricted(y);
    ++evals;
    const auto keep = [&](const optim::StageResult& r) {
      evals += r.evaluations;
      if (r.x.size() == y.size() && r.f <= fc) {
        y = sub.clamp(r.x);
        fc = r.f;
      }
    };
    optim::NelderMeadOptions nm;
    nm.max_evaluations = budget / 3;
    nm.initial_step = 0.05;
    keep(optim::nelder_mead(restricted, sub, y, nm));
    optim::QuasiNewtonOptions qn;
    qn.max_evaluations = budget - budget / 3;
    keep(optim::quasi_newton(restricted, sub, y, qn));
    return std::pair{embed(y), fc};
  };
  optim::Vec z;
  double best = kInf;
  for (const auto& start : starts) {
    auto [zc, fc] = polish(start.second, share);
    if (z.size() == 0 || fc < best) {
      z = zc;
      best = fc;
    }
  }

  // Births on poorly explained points let small outlier peaks appear, which
  // local moves from the smooth starts rarely reach.
  constexpr int kBirthPoints = 20, kBirthPolished = 3;
  long birth_budget = config.stage_budgets[0] - config.stage_budgets[0] / 2;
  while (birth_budget > 0) {
    std::vector<std::pair<double, optim::Vec>> trials;
    for (const MixtureParams& c :
         birth_candidates(data, objective.params(z), config.significant_amplitude, kBirthPoints)) {
      optim::Vec zc = box.clamp(c.flatten());
      trials.emplace_back(objective(zc), std::move(zc));
      ++evals;
      --birth_budget;
    }
    if (trials.empty()) break;
    const auto top = trials.begin() + std::min<std::ptrdiff_t>(kBirthPolished, std::ssize(trials));
    std::partial_sort(trials.begin(), top, trials.end(),
                      [](const auto& a, const auto& b) { return a.first < b.first; });
    const long each = std::max<long>(2, std::min(birth_budget, config.stage_budgets[0] / 2) / kBirthPolished);
    bool improved = false;
    for (auto it = trials.begin(); it != top && birth_budget > 0; ++it) {
      if (!std::isfinite(it->first)) continue;
      auto [zc, fc] = polish(it->second, each);
      birth_budget -= each;
      if (fc < best) {
        z = zc;
        best = fc;
        improved = true;
      }
    }
    if (!improved) break;
  }
  history.push_back(best);

  const auto take = [&](const optim::StageResult& r) {
    evals += r.evaluations;
    if (r.x.size() == z.size() && r.f <= best) {
      best = r.f;
      z = box.clamp(r.x);
    }
    history.push_back(best);
  };

  optim::EvolutionOptions es;
  es.max_evaluations = config.stage_budgets[1];
  take(optim::evolution_strategy(objective, box, z, rng, es));

  optim::NelderMeadOptions nm2;
  nm2.max_evaluations = config.stage_budgets[2];
  nm2.initial_step = 0.02;
  take(optim::nelder_mead(objective, box, z, nm2));

  optim::QuasiNewtonOptions qn;
  qn.max_evaluations = config.stage_budgets[3];
  take(optim::quasi_newton(objective, box, z, qn));

  FitResult res;
  res.params = objective.params(z);
  // Likelihood-only fits get the Q-optimal ranges for their parameters, for reference.
  const detail::DeltaMSolution dm = detail::DeltaMSolver(data, qopts).solve(res.params, dm_lo, dm_hi);
  res.delta_m = std::isfinite(dm.cost) ? dm.delta_m : DeltaM{Vector(dm_lo)};
  res.q = QEvaluator(data, qopts)(res.params, res.delta_m);
  res.stage_history = history;
  res.mode = config.mode;
  res.delta_x = config.delta_x;
  res.provenance = {config.seed, config.hash(), evals};
  res.runaway_width =
      !runaway_components(res.params, data, config.significant_amplitude, config.min_width_fraction).empty();
  res.valid = res.q.valid && !res.runaway_width;
  if (bitcount && !std::isfinite(best)) {
    std::ostringstream os;
    os << "no valid point found within budget (q_l=" << res.q.q_l << ", q_delta=" << res.q.q_delta << ")";
    throw FitFailure(os.str());
  }
  return res;
}

/// Removes components below the amplitude threshold or the width floor,
/// renormalizes the amplitudes and recomputes Q.
inline FitResult prune(const FitResult& fit_in, const Dataset& data, double significant_amplitude = 0.01,
                       double min_width_fraction = 1e-6) {
  const MixtureParams& p = fit_in.params;
  const ParamLayout l = p.layout();
  const Vector w = p.component_weights(), range = detail::data_range(data);
  const Matrix widths = p.widths();

  std::vector<int> keep, removed;
  bool runaway = false;
  for (int i = 0; i < l.n_components; ++i) {
    bool thin = false;
    for (int d = 0; d < l.n_dim; ++d) thin = thin || widths(i, d) < min_width_fraction * range[d];
    if (thin && w[i] >= significant_amplitude) runaway = true;
    if (thin || w[i] < significant_amplitude)
      removed.push_back(i);
    else
      keep.push_back(i);
  }
  if (removed.empty()) return fit_in;
  if (keep.empty()) throw DegenerateParameterError("pruning would remove every component");

  const int n_keep = static_cast<int>(keep.size());
  const ParamLayout nl{l.scheme, n_keep, l.n_dim};
  const Vector dm_old = fit_in.delta_m.values();
  MixtureParams np;
  np.scheme = l.scheme;
  np.means.resize(n_keep, l.n_dim);
  np.log_widths.resize(n_keep, l.n_dim);
  Vector dm_new(nl.n_params());
  for (int c = 0; c < n_keep; ++c) {
    np.means.row(c) = p.means.row(keep[c]);
    np.log_widths.row(c) = p.log_widths.row(keep[c]);
    for (int d = 0; d < l.n_dim; ++d) {
      dm_new[nl.mean(c, d)] = dm_old[l.mean(keep[c], d)];
      dm_new[nl.log_width(c, d)] = dm_old[l.log_width(keep[c], d)];
    }
  }
  if (l.scheme == AmplitudeScheme::SquaredNorm) {
    np.amp_raw.resize(n_keep);
    for (int c = 0; c < n_keep; ++c) {
      np.amp_raw[c] = p.amp_raw[keep[c]];
      dm_new[nl.amp(c)] = dm_old[l.amp(keep[c])];
    }
  } else {
    Vector kept_w(n_keep);
    for (int c = 0; c < n_keep; ++c) kept_w[c] = w[keep[c]];
    np.amp_raw = angles_from_weights(kept_w / kept_w.sum());
    // Angle slots carry over in order; a missing slot takes the smallest old range.
    std::vector<double> slots;
    for (int c : keep)
      if (c < l.n_amp()) slots.push_back(dm_old[l.amp(c)]);
    const double fallback = l.n_amp() > 0 ? dm_old.head(l.n_amp()).minCoeff() : 1.0;
    for (int j = 0; j < nl.n_amp(); ++j)
      dm_new[nl.amp(j)] = j < static_cast<int>(slots.size()) ? slots[static_cast<std::size_t>(j)] : fallback;
  }

  FitResult out = fit_in;
  out.params = np;
  out.delta_m = DeltaM::from_values(dm_new);
  const QOptions qopts{fit_in.mode, fit_in.delta_x};
  out.q = QEvaluator(data, qopts)(out.params, out.delta_m);
  // The carried ranges are a starting point; the optimal ones are cheaper when available.
  const detail::DeltaMSolution best = detail::optimal_delta_m(data, out.params, qopts);
  if (std::isfinite(best.cost)) {
    const QBreakdown q = QEvaluator(data, qopts)(out.params, best.delta_m);
    if (q.valid && (!out.q.valid || q.q_total < out.q.q_total)) {
      out.delta_m = best.delta_m;
      out.q = q;
    }
  }
  if (!out.q.valid) {
    try {
      out.delta_m = repair_delta_m(data, out.params, out.delta_m, qopts).delta_m;
      out.q = QEvaluator(data, qopts)(out.params, out.delta_m);
    } catch (const IrreparableError&) {
      // Left invalid; a collapsed component typically ends up here.
    }
  }
  out.pruned = fit_in.pruned;
  out.pruned.insert(out.pruned.end(), removed.begin(), removed.end());
  out.runaway_width = fit_in.runaway_width || runaway;
  out.valid = out.q.valid && !out.runaway_width;
  return out;
}

} // namespace occam
