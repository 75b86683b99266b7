#pragma once

// Diagonal-covariance Gaussian mixture viewed as a parametric coordinate
// transform u = F(x, m). Coordinate lambda is the conditional CDF of x_lambda
// given x_0..x_{lambda-1}, so the spatial Jacobian is lower triangular and its
// determinant is the mixture density.

#include "occam/errors.hpp"
#include "occam/log_math.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace occam {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class AmplitudeScheme {
  SquaredNorm,     // a_j = r_j^2 / sum_l r_l^2, one raw value per component
  Hyperspherical,  // a_j = e_j^2, e = rotation of (0,...,0,1) by n_a - 1 angles
};

inline std::string_view to_string(AmplitudeScheme s) {
  return s == AmplitudeScheme::SquaredNorm ? "sqnorm" : "hyperspherical";
}

inline AmplitudeScheme parse_scheme(std::string_view name) {
  if (name == "sqnorm" || name == "squared-norm") return AmplitudeScheme::SquaredNorm;
  if (name == "hyperspherical" || name == "angles") return AmplitudeScheme::Hyperspherical;
  throw InvalidArgument("unknown amplitude scheme '" + std::string(name) + "'");
}

inline int amplitude_count(AmplitudeScheme s, int n_components) {
  return s == AmplitudeScheme::SquaredNorm ? n_components : n_components - 1;
}

/// Positions of each model parameter inside the flattened parameter vector:
/// [amplitudes | means (component-major) | log widths (component-major)].
struct ParamLayout {
  AmplitudeScheme scheme = AmplitudeScheme::SquaredNorm;
  int n_components = 0;
  int n_dim = 0;

  int n_amp() const { return amplitude_count(scheme, n_components); }
  int n_params() const { return n_amp() + 2 * n_components * n_dim; }
  int amp(int j) const { return j; }
  int mean(int comp, int dim) const { return n_amp() + comp * n_dim + dim; }
  int log_width(int comp, int dim) const {
    return n_amp() + n_components * n_dim + comp * n_dim + dim;
  }
  bool is_amplitude(int k) const { return k < n_amp(); }
  bool is_mean(int k) const { return k >= n_amp() && k < n_amp() + n_components * n_dim; }

  friend bool operator==(const ParamLayout&, const ParamLayout&) = default;
};

/// Derived mixture weights and their derivatives with respect to the raw
/// amplitude parameters (n_a x n_amp).
struct AmplitudeWeights {
  Vector weights;
  Matrix jacobian;
};

inline AmplitudeWeights weights(const Vector& amp_raw, AmplitudeScheme scheme, int n_components) {
  const int n = n_components;
  if (n < 1) throw InvalidArgument("mixture needs at least one component");
  if (amp_raw.size() != amplitude_count(scheme, n))
    throw InvalidArgument("amplitude vector length does not match the scheme");

  AmplitudeWeights out{Vector::Zero(n), Matrix::Zero(n, amp_raw.size())};
  if (scheme == AmplitudeScheme::SquaredNorm) {
    const double s = amp_raw.squaredNorm();
    if (!(s > 0.0) || !std::isfinite(s))
      throw DegenerateParameterError("squared-norm amplitudes need a non-zero finite raw vector");
    out.weights = amp_raw.array().square() / s;
    // d a_j / d r_k = 2 r_k (delta_jk - a_j) / S
    for (int k = 0; k < n; ++k) {
      for (int j = 0; j < n; ++j)
        out.jacobian(j, k) = 2.0 * amp_raw[k] * ((j == k ? 1.0 : 0.0) - out.weights[j]) / s;
    }
    return out;
  }

  const int m = n - 1;
  std::vector<double> c(m), sn(m);
  for (int j = 0; j < m; ++j) {
    c[j] = std::cos(amp_raw[j]);
    sn[j] = std::sin(amp_raw[j]);
  }
  // e_i and de_i/dalpha_k by direct products.
  Vector e(n);
  Matrix de = Matrix::Zero(n, m);
  for (int i = 0; i < n; ++i) {
    const int n_cos = (i < m) ? i : m;  // cosines multiplying component i
    const double lead = (i < m) ? sn[i] : 1.0;
    double prod = 1.0;
    for (int j = 0; j < n_cos; ++j) prod *= c[j];
    e[i] = lead * prod;
    for (int k = 0; k < n_cos; ++k) {
      double p = -sn[k];
      for (int j = 0; j < n_cos; ++j)
        if (j != k) p *= c[j];
      de(i, k) = lead * p;
    }
    if (i < m) de(i, i) = c[i] * prod;
  }
  out.weights = e.array().square();
  for (int i = 0; i < n; ++i) out.jacobian.row(i) = 2.0 * e[i] * de.row(i);
  return out;
}

/// Angles that reproduce the given weights under the hyperspherical scheme.
inline Vector angles_from_weights(const Vector& w) {
  const int n = static_cast<int>(w.size());
  Vector alpha = Vector::Zero(std::max(n - 1, 0));
  double remaining = w.sum();
  for (int i = 0; i + 1 < n; ++i) {
    const double e = std::sqrt(std::max(w[i], 0.0));
    remaining = std::max(remaining - std::max(w[i], 0.0), 0.0);
    alpha[i] = std::atan2(e, std::sqrt(remaining));
  }
  return alpha;
}

struct Dataset {
  RowMatrix points;  // n_data x n_dim
  std::vector<std::string> labels;

  Dataset() = default;
  explicit Dataset(RowMatrix pts, std::vector<std::string> column_labels = {})
      : points(std::move(pts)), labels(std::move(column_labels)) {
    validate();
  }

  int size() const { return static_cast<int>(points.rows()); }
  int n_dim() const { return static_cast<int>(points.cols()); }
  std::span<const double> row(int i) const {
    return {points.data() + static_cast<std::ptrdiff_t>(i) * points.cols(),
            static_cast<std::size_t>(points.cols())};
  }

  void validate() const {
    if (points.rows() < 1 || points.cols() < 1)
      throw InvalidArgument("dataset needs at least one point and one dimension");
    if (!points.allFinite()) throw InvalidArgument("dataset contains non-finite values");
    if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != points.cols())
      throw InvalidArgument("column label count does not match dimension");
  }

  Vector column_min() const { return points.colwise().minCoeff().transpose(); }
  Vector column_max() const { return points.colwise().maxCoeff().transpose(); }
  Vector column_mean() const { return points.colwise().mean().transpose(); }
  Vector column_stddev() const {
    const Vector mu = column_mean();
    Vector sd(n_dim());
    for (int d = 0; d < n_dim(); ++d) {
      const double ss = (points.col(d).array() - mu[d]).square().sum();
      sd[d] = std::sqrt(ss / std::max(1, size() - 1));
    }
    return sd;
  }
};

struct MixtureParams {
  AmplitudeScheme scheme = AmplitudeScheme::SquaredNorm;
  Vector amp_raw;
  Matrix means;       // n_a x n_dim
  Matrix log_widths;  // n_a x n_dim

  int n_components() const { return static_cast<int>(means.rows()); }
  int n_dim() const { return static_cast<int>(means.cols()); }
  ParamLayout layout() const { return {scheme, n_components(), n_dim()}; }
  int n_params() const { return layout().n_params(); }

  Vector component_weights() const { return occam::weights(amp_raw, scheme, n_components()).weights; }
  Matrix widths() const { return log_widths.array().exp().matrix(); }

  Vector flatten() const {
    const ParamLayout l = layout();
    Vector v(l.n_params());
    for (int j = 0; j < l.n_amp(); ++j) v[l.amp(j)] = amp_raw[j];
    for (int i = 0; i < l.n_components; ++i)
      for (int d = 0; d < l.n_dim; ++d) {
        v[l.mean(i, d)] = means(i, d);
        v[l.log_width(i, d)] = log_widths(i, d);
      }
    return v;
  }

  static MixtureParams unflatten(const ParamLayout& l, std::span<const double> v) {
    if (static_cast<int>(v.size()) < l.n_params())
      throw InvalidArgument("flattened parameter vector too short");
    MixtureParams p;
    p.scheme = l.scheme;
    p.amp_raw.resize(l.n_amp());
    p.means.resize(l.n_components, l.n_dim);
    p.log_widths.resize(l.n_components, l.n_dim);
    for (int j = 0; j < l.n_amp(); ++j) p.amp_raw[j] = v[l.amp(j)];
    for (int i = 0; i < l.n_components; ++i)
      for (int d = 0; d < l.n_dim; ++d) {
        p.means(i, d) = v[l.mean(i, d)];
        p.log_widths(i, d) = v[l.log_width(i, d)];
      }
    return p;
  }

  /// Throws if the parameters cannot describe a normalized mixture.
  void validate() const {
    if (n_components() < 1 || n_dim() < 1) throw InvalidArgument("empty mixture");
    if (log_widths.rows() != means.rows() || log_widths.cols() != means.cols())
      throw InvalidArgument("means and widths have different shapes");
    if (amp_raw.size() != amplitude_count(scheme, n_components()))
      throw InvalidArgument("amplitude vector length does not match the scheme");
    if (!amp_raw.allFinite() || !means.allFinite() || !log_widths.allFinite())
      throw InvalidArgument("mixture parameters must be finite");
    if (!widths().allFinite() || (widths().array() <= 0.0).any())
      throw InvalidArgument("mixture widths must be positive and finite");
    (void)occam::weights(amp_raw, scheme, n_components());
  }
};

/// Per-evaluation constants derived once from a parameter set.
struct PreparedMixture {
  ParamLayout layout;
  Vector weights;
  Vector log_weights;
  Matrix weight_jac;
  RowMatrix means;
  RowMatrix log_widths;
  RowMatrix widths;

  explicit PreparedMixture(const MixtureParams& p) : layout(p.layout()) {
    auto w = occam::weights(p.amp_raw, p.scheme, p.n_components());
    weights = std::move(w.weights);
    weight_jac = std::move(w.jacobian);
    log_weights = weights.array().log();
    means = p.means;
    log_widths = p.log_widths;
    widths = log_widths.array().exp();
  }
};

struct EncoderEval {
  Vector u;       // encoded coordinates
  Matrix jac_x;   // dF_nu / dx_mu, lower triangular
  Matrix jac_m;   // dF_nu / dm_k over the flattened parameters
  double log_pdf = 0.0;
};

/// Scratch buffers reused across encode_into calls.
struct EncoderWorkspace {
  Vector cum, partial, pi, omega, diff, dens, next, scratch;
  RowMatrix z;
  std::vector<NormalTails> tails;

  void resize(int n_a, int n_dim) {
    for (Vector* v : {&cum, &partial, &pi, &omega, &diff, &dens, &next, &scratch}) v->resize(n_a);
    z.resize(n_a, n_dim);
    tails.resize(static_cast<std::size_t>(n_a));
  }
};

inline void encode_into(std::span<const double> x, const PreparedMixture& pm, EncoderWorkspace& ws,
                        EncoderEval& out) {
  const ParamLayout& l = pm.layout;
  const int n_a = l.n_components;
  const int n_dim = l.n_dim;
  ws.resize(n_a, n_dim);
  out.u.resize(n_dim);
  out.jac_x.setZero(n_dim, n_dim);
  out.jac_m.setZero(n_dim, l.n_params());

  const auto lse = [](const Vector& v) { return log_sum_exp({v.data(), static_cast<std::size_t>(v.size())}); };

  ws.cum = pm.log_weights;      // log a_i + sum_{nu<lambda} log N_i(x_nu)
  ws.partial.setZero();         // sum_{nu<lambda} log N_i(x_nu)
  double lse_prev = lse(ws.cum);

  for (int lam = 0; lam < n_dim; ++lam) {
    // Responsibilities of the components given the preceding coordinates.
    for (int i = 0; i < n_a; ++i) {
      ws.pi[i] = std::exp(ws.cum[i] - lse_prev);
      ws.omega[i] = std::exp(ws.partial[i] - lse_prev);
      const double zi = (x[lam] - pm.means(i, lam)) / pm.widths(i, lam);
      ws.z(i, lam) = zi;
      ws.tails[i] = normal_tails(zi);
      const double log_n = -kLogSqrtTwoPi - pm.log_widths(i, lam) - 0.5 * zi * zi;
      ws.next[i] = ws.cum[i] + log_n;
      ws.dens[i] = std::exp(ws.next[i] - lse_prev);  // pi_i N_i(x_lambda)
    }

    double lower = 0.0, upper = 0.0;
    for (int i = 0; i < n_a; ++i) {
      lower += ws.pi[i] * ws.tails[i].lower;
      upper += ws.pi[i] * ws.tails[i].upper;
    }
    out.u[lam] = (upper < 0.5) ? 1.0 - upper : lower;

    // Phi_i - F_lambda as a responsibility-weighted sum of pairwise differences.
    for (int i = 0; i < n_a; ++i) {
      double d = 0.0;
      for (int j = 0; j < n_a; ++j) {
        if (j == i || ws.pi[j] == 0.0) continue;
        d += ws.pi[j] * cdf_difference(ws.z(i, lam), ws.tails[i], ws.z(j, lam), ws.tails[j]);
      }
      ws.diff[i] = d;
    }

    const double lse_next = lse(ws.next);
    out.jac_x(lam, lam) = std::exp(lse_next - lse_prev);  // conditional density

    for (int mu = 0; mu < lam; ++mu) {
      double acc = 0.0;
      for (int i = 0; i < n_a; ++i) {
        const double sig = pm.widths(i, mu);
        const double zi = ws.z(i, mu);
        const double pd = ws.pi[i] * ws.diff[i];
        acc += pd * (-zi / sig);
        out.jac_m(lam, l.mean(i, mu)) = pd * zi / sig;
        out.jac_m(lam, l.log_width(i, mu)) = pd * (zi * zi - 1.0);
      }
      out.jac_x(lam, mu) = acc;
    }
    for (int i = 0; i < n_a; ++i) {
      out.jac_m(lam, l.mean(i, lam)) = -ws.dens[i];
      out.jac_m(lam, l.log_width(i, lam)) = -ws.dens[i] * ws.z(i, lam) * pm.widths(i, lam);
    }
    // dF/da_j = omega_j (Phi_j - F), chained through the amplitude parameterization.
    if (l.n_amp() > 0) {
      ws.scratch = ws.omega.cwiseProduct(ws.diff);
      out.jac_m.row(lam).head(l.n_amp()) = (ws.scratch.transpose() * pm.weight_jac);
    }

    for (int i = 0; i < n_a; ++i) {
      ws.partial[i] += ws.next[i] - ws.cum[i];
    }
    ws.cum = ws.next;
    lse_prev = lse_next;
  }
  out.log_pdf = lse_prev;
}

inline EncoderEval encode(std::span<const double> x, const MixtureParams& params) {
  if (static_cast<int>(x.size()) != params.n_dim())
    throw InvalidArgument("point dimension does not match the model");
  PreparedMixture pm(params);
  EncoderWorkspace ws;
  EncoderEval out;
  encode_into(x, pm, ws, out);
  return out;
}

/// log sum_i a_i prod_nu N(x_nu; m_i nu, sigma_i nu^2) via log-sum-exp.
inline double log_pdf(std::span<const double> x, const PreparedMixture& pm, Vector& scratch) {
  const ParamLayout& l = pm.layout;
  scratch.resize(l.n_components);
  for (int i = 0; i < l.n_components; ++i) {
    double acc = pm.log_weights[i];
    for (int d = 0; d < l.n_dim; ++d) {
      const double z = (x[d] - pm.means(i, d)) / pm.widths(i, d);
      acc += -kLogSqrtTwoPi - pm.log_widths(i, d) - 0.5 * z * z;
    }
    scratch[i] = acc;
  }
  return log_sum_exp({scratch.data(), static_cast<std::size_t>(scratch.size())});
}

inline double log_pdf(std::span<const double> x, const MixtureParams& params) {
  if (static_cast<int>(x.size()) != params.n_dim())
    throw InvalidArgument("point dimension does not match the model");
  PreparedMixture pm(params);
  Vector scratch;
  return log_pdf(x, pm, scratch);
}

/// The spatial Jacobian rebuilt from the mean derivatives,
/// dF_nu/dx_mu = -sum_j dF_nu/dm_{j mu}. Consistency check only.
inline Matrix jac_x_from_means(const EncoderEval& eval, const MixtureParams& params) {
  const ParamLayout l = params.layout();
  Matrix out = Matrix::Zero(l.n_dim, l.n_dim);
  for (int mu = 0; mu < l.n_dim; ++mu)
    for (int j = 0; j < l.n_components; ++j) out.col(mu) -= eval.jac_m.col(l.mean(j, mu));
  return out;
}

} // namespace occam
