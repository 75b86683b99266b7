#pragma once

// Parameter uncertainty by propagating a perturbation of the encoded data
// through the stationarity condition of Q:
//   dp = -A^+ sum_j H_px_j J_x_j^-1 du_j,   Cov(du_j) = sigma_u^2 I,
// with A = H_pp (Simple) or H_pp - sum_j H_px_j J_x_j^-1 J_p_j (Full) and
// sigma_u = (12 n)^(-1/2). p covers the flattened parameters and log delta m.

#include "occam/bit_cost.hpp"
#include "occam/errors.hpp"
#include "occam/mixture_model.hpp"
#include "occam/optim/numeric_gradient.hpp"
#include "occam/optimizer.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace occam {

enum class ErrorMethod { Simple, Full };

inline std::string_view to_string(ErrorMethod m) { return m == ErrorMethod::Simple ? "simple" : "full"; }
inline ErrorMethod parse_error_method(std::string_view s) {
  if (s == "simple") return ErrorMethod::Simple;
  if (s == "full") return ErrorMethod::Full;
  throw InvalidArgument("unknown error method '" + std::string(s) + "'");
}

struct ErrorOptions {
  ErrorMethod method = ErrorMethod::Simple;
  std::optional<double> sigma_u;  // overrides (12 n)^(-1/2)
  double hpp_step = 1e-4;         // relative to max(|p_k|, 1)
  double hpx_step = 1e-4;         // relative to the per-dimension data deviation
  double rank_tolerance = 1e-6;   // singular values below this times the largest are dropped
  double stationarity_tolerance = 1e-2;  // on the gradient norm over sqrt(n)
};

struct ErrorEstimate {
  Vector std;
  Matrix covariance;
  ErrorMethod method = ErrorMethod::Simple;
  double condition = 0.0;
  int rank = 0;
  bool rank_deficient = false;
  double sigma_u = 0.0;
  double gradient_norm = 0.0;
  bool stationary = true;
  Matrix h_pp;
};

namespace detail {

/// Q as a function of p = [flattened params | log delta m] on a fixed dataset.
class ErrorModel {
public:
  ErrorModel(const Dataset& data, ParamLayout layout, QOptions opts)
      : data_(data), layout_(layout), eval_(data, opts), as_{opts, data.n_dim()} {}

  int size() const { return 2 * layout_.n_params(); }

  Vector pack(const MixtureParams& p, const DeltaM& dm) const {
    Vector z(size());
    z << p.flatten(), dm.log_values;
    return z;
  }
  MixtureParams params(const Vector& z) const {
    return MixtureParams::unflatten(layout_, {z.data(), static_cast<std::size_t>(layout_.n_params())});
  }
  DeltaM delta_m(const Vector& z) const { return DeltaM{z.tail(layout_.n_params())}; }

  double q(const Vector& z) const {
    try {
      return eval_.total(params(z), delta_m(z));
    } catch (const Error&) {
      return kInf;
    }
  }

  /// Per-point (log f, sum log b) at p, used to hold all other points fixed.
  struct Terms {
    std::vector<double> log_pdf, slb;
    double total_slb = 0.0;
  };

  Terms terms(const Vector& z) const {
    const PreparedMixture pm(params(z));
    const Vector dm = delta_m(z).values();
    Terms t;
    const int n = data_.size();
    t.log_pdf.resize(static_cast<std::size_t>(n));
    t.slb.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      const PointTerm pt = eval_.point_term(data_.row(i), pm, dm);
      t.log_pdf[i] = pt.log_pdf;
      t.slb[i] = pt.ok ? std::max(pt.sum_log_b, kLogFloor * data_.n_dim()) : kInf;
      t.total_slb += t.slb[i];
    }
    return t;
  }

  /// The part of Q that depends on point j when it sits at x.
  double point_cost(const PreparedMixture& pm, const Vector& dm, const Terms& t, int j,
                    std::span<const double> x) const {
    const PointTerm pt = eval_.point_term(x, pm, dm);
    if (!pt.ok) return kInf;
    const double slb = std::max(pt.sum_log_b, kLogFloor * data_.n_dim());
    double arg = 0.0, scale = 0.0, r = 0.0;
    if (eval_.options().mode == QMode::Local) {
      r = as_.local_point(slb, arg, scale);
    } else {
      r = as_.global_total(t.total_slb - t.slb[j] + slb, data_.size(), arg);
    }
    return -pt.log_pdf + r;
  }

  const Dataset& data() const { return data_; }
  const ParamLayout& layout() const { return layout_; }

private:
  const Dataset& data_;
  ParamLayout layout_;
  QEvaluator eval_;
  Assembler as_;
};

inline double finite_or_throw(double v, const char* what) {
  if (!std::isfinite(v)) throw EvaluationError(std::string("Q is not finite while differencing ") + what, 0);
  return v;
}

/// Central second differences; steps shrink if a probe leaves the valid region.
inline Matrix hessian(const ErrorModel& m, const Vector& z, double rel_step) {
  const int n = m.size();
  Vector h(n);
  for (int k = 0; k < n; ++k) h[k] = rel_step * std::max(std::abs(z[k]), 1.0);
  const auto probe = [&](int a, double sa, int b, double sb) {
    for (int attempt = 0; attempt < 10; ++attempt) {
      Vector p = z;
      p[a] += sa * h[a];
      if (b >= 0) p[b] += sb * h[b];
      const double v = m.q(p);
      if (std::isfinite(v)) return v;
      h[a] *= 0.5;
      if (b >= 0) h[b] *= 0.5;
    }
    return kInf;
  };
  const double f0 = finite_or_throw(m.q(z), "at the fit");
  Matrix H(n, n);
  for (int a = 0; a < n; ++a) {
    (void)probe(a, 1, -1, 0);
    (void)probe(a, -1, -1, 0);
    // Both sides again at the (possibly shrunk) final step.
    const double fp = probe(a, 1, -1, 0), fm = probe(a, -1, -1, 0);
    H(a, a) = (finite_or_throw(fp, "H_pp") - 2.0 * f0 + finite_or_throw(fm, "H_pp")) / (h[a] * h[a]);
  }
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) {
      const double fpp = probe(a, 1, b, 1), fpm = probe(a, 1, b, -1);
      const double fmp = probe(a, -1, b, 1), fmm = probe(a, -1, b, -1);
      const double v = (finite_or_throw(fpp, "H_pp") - finite_or_throw(fpm, "H_pp") -
                        finite_or_throw(fmp, "H_pp") + finite_or_throw(fmm, "H_pp")) /
                       (4.0 * h[a] * h[b]);
      H(a, b) = H(b, a) = v;
    }
  return H;
}

/// Mixed derivatives d^2 Q / dp dx_j for every point, stacked as
/// P x (n_data * n_dim), column j * n_dim + nu.
inline Matrix mixed_hessian(const ErrorModel& m, const Vector& z, double rel_p, double rel_x) {
  const Dataset& data = m.data();
  const int P = m.size(), n = data.size(), d = data.n_dim();
  Vector hx = data.column_stddev() * rel_x;
  for (int nu = 0; nu < d; ++nu)
    if (!(hx[nu] > 0.0)) hx[nu] = rel_x;

  Matrix out(P, n * d);
  std::vector<double> x(static_cast<std::size_t>(d));
  for (int k = 0; k < P; ++k) {
    const double hp = rel_p * std::max(std::abs(z[k]), 1.0);
    std::array<Matrix, 2> side;  // rows j*d+nu, columns x shifted up/down
    for (int s = 0; s < 2; ++s) {
      Vector p = z;
      p[k] += (s == 0 ? hp : -hp);
      const ErrorModel::Terms t = m.terms(p);
      const PreparedMixture pm(m.params(p));
      const Vector dm = m.delta_m(p).values();
      side[s].resize(n * d, 2);
      for (int j = 0; j < n; ++j) {
        const auto row = data.row(j);
        for (int nu = 0; nu < d; ++nu) {
          for (int tt = 0; tt < 2; ++tt) {
            std::copy(row.begin(), row.end(), x.begin());
            x[nu] += (tt == 0 ? hx[nu] : -hx[nu]);
            side[s](j * d + nu, tt) = m.point_cost(pm, dm, t, j, x);
          }
        }
      }
    }
    for (int c = 0; c < n * d; ++c) {
      const double v = (side[0](c, 0) - side[0](c, 1) - side[1](c, 0) + side[1](c, 1)) / (4.0 * hp * hx[c % d]);
      out(k, c) = finite_or_throw(v, "H_px");
    }
  }
  return out;
}

} // namespace detail

inline ErrorEstimate estimate_errors(const Dataset& data, const FitResult& fit, const ErrorOptions& opt = {}) {
  const ParamLayout layout = fit.params.layout();
  if (layout.n_dim != data.n_dim()) throw InvalidArgument("model and dataset dimensions differ");
  const detail::ErrorModel model(data, layout, QOptions{fit.mode, fit.delta_x});
  const Vector z = model.pack(fit.params, fit.delta_m);
  const int P = model.size(), n = data.size(), d = data.n_dim(), np = layout.n_params();

  ErrorEstimate est;
  est.method = opt.method;
  est.sigma_u = opt.sigma_u ? *opt.sigma_u : 1.0 / std::sqrt(12.0 * n);

  auto q = [&](const Vector& v) { return model.q(v); };
  const optim::GradientResult g = optim::numeric_gradient(q, z);
  // Truncation ranges pinned at their upper bound are not expected to be stationary.
  Vector free_grad = g.gradient;
  const double dm_cap = std::log(std::min(1.0, fit.delta_x));
  for (int k = 0; k < np; ++k)
    if (z[np + k] >= dm_cap - 1e-9) free_grad[np + k] = 0.0;
  est.gradient_norm = free_grad.norm();
  est.stationary = !g.any_failed() && est.gradient_norm <= opt.stationarity_tolerance * std::sqrt(double(n));

  est.h_pp = detail::hessian(model, z, opt.hpp_step);
  const Matrix hpx = detail::mixed_hessian(model, z, opt.hpp_step, opt.hpx_step);

  const MixtureParams params = fit.params;
  Matrix A = est.h_pp;
  Matrix M = Matrix::Zero(P, P);
  for (int j = 0; j < n; ++j) {
    const EncoderEval ev = encode(data.row(j), params);
    const Matrix jinv = ev.jac_x.triangularView<Eigen::Lower>().solve(Matrix::Identity(d, d));
    const Matrix C = hpx.middleCols(j * d, d) * jinv;  // P x d
    M.noalias() += C * C.transpose();
    if (opt.method == ErrorMethod::Full) A.leftCols(np).noalias() -= C * ev.jac_m;
  }
  M *= est.sigma_u * est.sigma_u;

  Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector s = svd.singularValues();
  const double smax = s.size() ? s[0] : 0.0;
  Vector sinv = Vector::Zero(s.size());
  est.rank = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s[i] > opt.rank_tolerance * smax) {
      sinv[i] = 1.0 / s[i];
      ++est.rank;
    }
  est.rank_deficient = est.rank < P;
  est.condition = est.rank > 0 ? smax / s[est.rank - 1] : kInf;
  if (est.rank_deficient && s[P - 1] > 0.0) est.condition = smax / s[P - 1];
  else if (est.rank_deficient) est.condition = kInf;

  const Matrix pinv = svd.matrixV() * sinv.asDiagonal() * svd.matrixU().transpose();
  Matrix cov = pinv * M * pinv.transpose();
  est.covariance = 0.5 * (cov + cov.transpose());
  est.std = est.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
  return est;
}

} // namespace occam
