#pragma once

// Total bit count Q = Q_l + Q_delta + Q_r of a mixture plus the data it
// encodes, and the truncation-volume formulas it is built from.
//
// Conventions: all quantities are in nats. The data precision Delta x is a
// single scalar (default 1); Delta m_k are then read as ratios to it.
// Invalid configurations (a non-positive volume under a logarithm) are
// reported as q_r = +inf with valid = false rather than thrown.

#include "occam/errors.hpp"
#include "occam/log_math.hpp"
#include "occam/mixture_model.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <span>
#include <string_view>
#include <vector>

namespace occam {

enum class QMode {
  Local,   // prod_mu Delta x_{mu i} fixed per data point
  Global,  // only prod_{i mu} Delta x_{mu i} fixed
};

inline std::string_view to_string(QMode m) { return m == QMode::Local ? "local" : "global"; }

inline QMode parse_mode(std::string_view s) {
  if (s == "local") return QMode::Local;
  if (s == "global") return QMode::Global;
  throw InvalidArgument("unknown mode '" + std::string(s) + "'");
}

/// Truncation ranges Delta m_k, one per flattened model parameter, stored as logs.
struct DeltaM {
  Vector log_values;

  static DeltaM from_values(const Vector& v) {
    if ((v.array() <= 0.0).any()) throw InvalidArgument("delta m values must be positive");
    return DeltaM{v.array().log().matrix()};
  }
  static DeltaM uniform(int n, double value) { return from_values(Vector::Constant(n, value)); }

  int size() const { return static_cast<int>(log_values.size()); }
  Vector values() const { return log_values.array().exp().matrix(); }
  DeltaM scaled(double s) const { return DeltaM{(log_values.array() + std::log(s)).matrix()}; }

  void validate(double upper = 1.0) const {
    if (!log_values.allFinite()) throw InvalidArgument("delta m must be finite and positive");
    if ((log_values.array() > std::log(upper) + 1e-12).any())
      throw InvalidArgument("delta m must not exceed one");
  }
};

struct QOptions {
  QMode mode = QMode::Global;
  double delta_x = 1.0;
};

struct QBreakdown {
  double q_l = 0.0;      // -sum_i log f(x_i)
  double q_delta = 0.0;  // -sum_k log Delta m_k
  double q_r = 0.0;      // perturbation regularizer
  double q_total = 0.0;
  bool valid = true;
  bool floored = false;  // a zero perturbation entry was floored (global mode)
  Vector per_point_corrections;  // the (1 - ...) arguments under the logarithm
  Vector point_scale;            // per-point geometric mean of b_{i mu} / Delta x
};

struct PerturbationMatrix {
  RowMatrix b;  // n_data x n_dim
};

namespace detail {

inline constexpr double kLogFloor = -690.77552789821368;  // log(1e-300)

/// Solves jac_x * y = jac_m (lower triangular) and returns
/// b_mu = sum_k |y_mu k| Delta m_k. Returns false when the system is singular
/// or produces non-finite values.
inline bool perturbation_row(const EncoderEval& ev, const Vector& dm, Matrix& y, Vector& b) {
  const int n = static_cast<int>(ev.jac_x.rows());
  b.resize(n);
  if (!ev.jac_x.allFinite() || !ev.jac_m.allFinite()) return false;
  for (int d = 0; d < n; ++d)
    if (!(ev.jac_x(d, d) > 0.0)) return false;
  y = ev.jac_x.triangularView<Eigen::Lower>().solve(ev.jac_m);
  b = y.cwiseAbs() * dm;
  return b.allFinite();
}

/// Per-point pieces Q is assembled from.
struct PointTerm {
  double log_pdf = 0.0;
  double sum_log_b = 0.0;  // sum_mu log b_{i mu} (may be -inf)
  bool ok = true;
};

struct Assembler {
  QOptions opts;
  int n_dim = 1;

  /// Regularizer for local mode from a single point term.
  double local_point(double sum_log_b, double& arg, double& scale) const {
    scale = std::exp(sum_log_b / n_dim) / opts.delta_x;
    arg = 1.0 - n_dim * scale;
    if (!(arg > 0.0)) return kInf;
    return -n_dim * std::log(opts.delta_x) - std::log(arg);
  }

  /// Regularizer for global mode from the summed log perturbations.
  double global_total(double total_log_b, int n_data, double& arg) const {
    const double g = std::exp(total_log_b / (static_cast<double>(n_data) * n_dim)) / opts.delta_x;
    arg = 1.0 - n_dim * g;
    if (!(arg > 0.0)) return kInf;
    return -static_cast<double>(n_data) * (n_dim * std::log(opts.delta_x) + std::log(arg));
  }
};

} // namespace detail

/// Evaluates Q on a fixed dataset, reusing scratch buffers between calls.
/// Not safe for concurrent use of one instance.
class QEvaluator {
public:
  QEvaluator(const Dataset& data, QOptions opts = {}) : data_(&data), opts_(opts) {
    if (!(opts.delta_x > 0.0)) throw InvalidArgument("delta x must be positive");
  }

  const Dataset& data() const { return *data_; }
  const QOptions& options() const { return opts_; }

  detail::PointTerm point_term(std::span<const double> x, const PreparedMixture& pm,
                               const Vector& dm) const {
    detail::PointTerm t;
    encode_into(x, pm, ws_, ev_);
    t.log_pdf = ev_.log_pdf;
    if (!detail::perturbation_row(ev_, dm, y_, b_)) {
      t.ok = false;
      t.sum_log_b = kInf;
      return t;
    }
    double s = 0.0;
    for (int d = 0; d < b_.size(); ++d) {
      if (!(b_[d] > 0.0)) {
        s = kNegInf;
        break;
      }
      s += std::log(b_[d]);
    }
    t.sum_log_b = s;
    return t;
  }

  QBreakdown operator()(const MixtureParams& params, const DeltaM& delta_m) const {
    return evaluate(params, delta_m, true);
  }

  /// q_total only; +inf when invalid.
  double total(const MixtureParams& params, const DeltaM& delta_m) const {
    const QBreakdown q = evaluate(params, delta_m, false);
    return q.valid ? q.q_total : kInf;
  }

  QBreakdown evaluate(const MixtureParams& params, const DeltaM& delta_m, bool detailed) const {
    const int n = data_->size();
    const int n_dim = data_->n_dim();
    if (params.n_dim() != n_dim) throw InvalidArgument("model and dataset dimensions differ");
    if (delta_m.size() != params.n_params())
      throw InvalidArgument("delta m length does not match the parameter count");

    const PreparedMixture pm(params);
    const Vector dm = delta_m.values();
    const detail::Assembler as{opts_, n_dim};

    QBreakdown q;
    q.q_delta = -delta_m.log_values.sum();
    if (detailed) {
      q.per_point_corrections.resize(n);
      q.point_scale.resize(n);
    }
    double q_l = 0.0, q_r = 0.0, total_log_b = 0.0;
    bool valid = true, floored = false;
    for (int i = 0; i < n; ++i) {
      const detail::PointTerm t = point_term(data_->row(i), pm, dm);
      q_l -= t.log_pdf;
      if (!t.ok || !std::isfinite(t.log_pdf)) valid = false;
      if (opts_.mode == QMode::Local) {
        double arg = 0.0, scale = 0.0;
        const double r = t.ok ? as.local_point(t.sum_log_b, arg, scale) : kInf;
        if (!std::isfinite(r)) valid = false;
        q_r += r;
        if (detailed) {
          q.per_point_corrections[i] = t.ok ? arg : kNegInf;
          q.point_scale[i] = t.ok ? scale : kInf;
        }
      } else {
        double slb = t.sum_log_b;
        if (t.ok && slb == kNegInf) {
          // A zero perturbation entry: floor each zero factor at 1e-300.
          floored = true;
          slb = floored_sum_log_b(data_->row(i), pm, dm);
        }
        total_log_b += slb;
        if (detailed) q.point_scale[i] = t.ok ? std::exp(t.sum_log_b / n_dim) / opts_.delta_x : kInf;
      }
      if (!valid && !detailed) break;
    }
    if (opts_.mode == QMode::Global && valid) {
      double arg = 0.0;
      q_r = as.global_total(total_log_b, n, arg);
      if (!std::isfinite(q_r)) valid = false;
      if (detailed) q.per_point_corrections.setConstant(arg);
    } else if (opts_.mode == QMode::Global) {
      q_r = kInf;
      if (detailed) {
        double arg = 0.0;
        (void)as.global_total(total_log_b, n, arg);
        q.per_point_corrections.setConstant(std::isfinite(total_log_b) ? arg : kNegInf);
      }
    }
    q.q_l = q_l;
    q.q_r = valid ? q_r : kInf;
    q.valid = valid;
    q.floored = floored;
    q.q_total = valid ? q.q_l + q.q_delta + q.q_r : kInf;
    return q;
  }

private:
  double floored_sum_log_b(std::span<const double> x, const PreparedMixture& pm, const Vector& dm) const {
    encode_into(x, pm, ws_, ev_);
    detail::perturbation_row(ev_, dm, y_, b_);
    double s = 0.0;
    for (int d = 0; d < b_.size(); ++d) s += b_[d] > 0.0 ? std::log(b_[d]) : detail::kLogFloor;
    return s;
  }

  const Dataset* data_;
  QOptions opts_;
  mutable EncoderWorkspace ws_;
  mutable EncoderEval ev_;
  mutable Matrix y_;
  mutable Vector b_;
};

/// b_{i mu} = sum_k |(jac_x^-1 jac_m)_{mu k}| Delta m_k for every data point.
inline PerturbationMatrix perturbation_matrix(const Dataset& data, const MixtureParams& params,
                                              const DeltaM& delta_m) {
  if (params.n_dim() != data.n_dim()) throw InvalidArgument("model and dataset dimensions differ");
  if (delta_m.size() != params.n_params()) throw InvalidArgument("delta m length mismatch");
  const PreparedMixture pm(params);
  const Vector dm = delta_m.values();
  EncoderWorkspace ws;
  EncoderEval ev;
  Matrix y;
  Vector b;
  PerturbationMatrix out{RowMatrix(data.size(), data.n_dim())};
  for (int i = 0; i < data.size(); ++i) {
    encode_into(data.row(i), pm, ws, ev);
    if (!ev.jac_x.allFinite() || !ev.jac_m.allFinite())
      throw EvaluationError("non-finite Jacobian entries", static_cast<std::size_t>(i));
    if (!detail::perturbation_row(ev, dm, y, b))
      throw EvaluationError("singular spatial Jacobian", static_cast<std::size_t>(i));
    out.b.row(i) = b.transpose();
  }
  return out;
}

namespace detail {

inline void check_volume_args(const EncoderEval& ev, const DeltaM& dm, std::span<const double> dx) {
  if (static_cast<Eigen::Index>(dx.size()) != ev.jac_x.rows())
    throw InvalidArgument("delta x length does not match dimension");
  if (dm.size() != ev.jac_m.cols()) throw InvalidArgument("delta m length mismatch");
  for (double v : dx)
    if (!(v > 0.0)) throw InvalidArgument("delta x must be positive");
}

inline Matrix solved_perturbations(const EncoderEval& ev) {
  return ev.jac_x.triangularView<Eigen::Lower>().solve(ev.jac_m);
}

inline double abs_det_times_dx(const EncoderEval& ev, std::span<const double> dx) {
  double v = std::abs(ev.jac_x.diagonal().prod());
  for (double d : dx) v *= d;
  return v;
}

} // namespace detail

/// Signed available volume from the determinant-lemma form:
/// (1 - sum_mu b_mu / dx_mu) |det J| prod dx.
inline double volume_eq7(const EncoderEval& ev, const DeltaM& delta_m, std::span<const double> dx) {
  detail::check_volume_args(ev, delta_m, dx);
  const Vector b = detail::solved_perturbations(ev).cwiseAbs() * delta_m.values();
  double corr = 1.0;
  for (int mu = 0; mu < b.size(); ++mu) corr -= b[mu] / dx[mu];
  return corr * detail::abs_det_times_dx(ev, dx);
}

/// Decoupled form: |det J| prod dx prod_k (1 - sum_mu |y_mu k| dm_k / dx_mu).
inline double volume_eq8(const EncoderEval& ev, const DeltaM& delta_m, std::span<const double> dx) {
  detail::check_volume_args(ev, delta_m, dx);
  const Matrix y = detail::solved_perturbations(ev);
  const Vector dm = delta_m.values();
  double prod = 1.0;
  for (int k = 0; k < y.cols(); ++k) {
    double t = 0.0;
    for (int mu = 0; mu < y.rows(); ++mu) t += std::abs(y(mu, k)) * dm[k] / dx[mu];
    prod *= 1.0 - t;
  }
  return prod * detail::abs_det_times_dx(ev, dx);
}

/// Component of column b of J orthogonal to all other columns (Gram-Schmidt).
inline Vector orthogonalized_column(const Matrix& jac, int col) {
  std::vector<Vector> basis;
  for (int c = 0; c < jac.cols(); ++c) {
    if (c == col) continue;
    Vector v = jac.col(c);
    for (const Vector& q : basis) v -= q.dot(v) * q;
    const double nv = v.norm();
    if (nv > 1e-14 * std::max(1.0, jac.col(c).norm())) basis.push_back(v / nv);
  }
  Vector perp = jac.col(col);
  for (int pass = 0; pass < 2; ++pass)
    for (const Vector& q : basis) perp -= q.dot(perp) * q;
  return perp;
}

/// Volume of the parallelotope whose edges are shrunk by sign-chosen
/// parameter shifts: |det(J diag(dx) - sum_k s(mu,k) dF/dm_k dm_k)|.
inline double volume_eq6(const EncoderEval& ev, const DeltaM& delta_m, std::span<const double> dx) {
  detail::check_volume_args(ev, delta_m, dx);
  const Matrix& jac = ev.jac_x;
  const int n = static_cast<int>(jac.rows());
  const Vector dm = delta_m.values();
  Matrix m(n, n);
  for (int b = 0; b < n; ++b) {
    const Vector perp = orthogonalized_column(jac, b);
    if (!(perp.norm() > 1e-300) || perp.norm() <= 1e-13 * jac.col(b).norm())
      throw DegenerateJacobianError("orthogonalized Jacobian column " + std::to_string(b) + " vanishes");
    Vector col = jac.col(b) * dx[b];
    for (int k = 0; k < ev.jac_m.cols(); ++k) {
      const double s = perp.dot(ev.jac_m.col(k)) >= 0.0 ? 1.0 : -1.0;
      col -= s * ev.jac_m.col(k) * dm[k];
    }
    m.col(b) = col;
  }
  return std::abs(m.determinant());
}

struct RegularizerTerm {
  double q_r = 0.0;
  Vector per_point_corrections;
  bool valid = true;
  bool floored = false;
};

inline RegularizerTerm q_regularizer(const Dataset& data, const MixtureParams& params,
                                     const DeltaM& delta_m, QMode mode, double delta_x = 1.0) {
  const QBreakdown q = QEvaluator(data, {mode, delta_x})(params, delta_m);
  return {q.q_r, q.per_point_corrections, q.valid, q.floored};
}

inline QBreakdown q_total(const Dataset& data, const MixtureParams& params, const DeltaM& delta_m,
                          QMode mode = QMode::Global, double delta_x = 1.0) {
  return QEvaluator(data, {mode, delta_x})(params, delta_m);
}

/// Univariate objective written directly in terms of the mixture CDF:
/// -sum_i log(f_i - sum_k |dF/dm_k| r_k) - sum_k log r_k.
/// Evaluated without the conditional-CDF encoder; +inf when invalid.
inline double q_univariate(const Dataset& data, const MixtureParams& params, const Vector& r) {
  if (data.n_dim() != 1 || params.n_dim() != 1) throw InvalidArgument("q_univariate needs 1D data");
  const int n_a = params.n_components();
  const ParamLayout l = params.layout();
  if (r.size() != l.n_params()) throw InvalidArgument("r length does not match parameter count");
  if ((r.array() <= 0.0).any()) return kInf;
  const AmplitudeWeights w = weights(params.amp_raw, params.scheme, n_a);

  double q = -r.array().log().sum();
  Vector cdf(n_a), pdf(n_a), dfdm(l.n_params());
  for (int i = 0; i < data.size(); ++i) {
    const double x = data.points(i, 0);
    double f = 0.0;
    for (int j = 0; j < n_a; ++j) {
      const double sigma = std::exp(params.log_widths(j, 0));
      const double z = (x - params.means(j, 0)) / sigma;
      cdf[j] = 0.5 * std::erfc(-z * kInvSqrtTwo);
      pdf[j] = std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
      f += w.weights[j] * pdf[j];
      dfdm[l.mean(j, 0)] = -w.weights[j] * pdf[j];
      dfdm[l.log_width(j, 0)] = -w.weights[j] * pdf[j] * z * sigma;
    }
    for (int k = 0; k < l.n_amp(); ++k) dfdm[l.amp(k)] = cdf.dot(w.jacobian.col(k));
    const double arg = f - dfdm.cwiseAbs().dot(r);
    if (!(arg > 0.0)) return kInf;
    q -= std::log(arg);
  }
  return q;
}

} // namespace occam
