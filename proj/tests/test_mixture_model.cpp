#include "test_common.hpp"

#include <gtest/gtest.h>

using namespace occam;
using namespace occam::testing;

namespace {

const AmplitudeScheme kSchemes[] = {AmplitudeScheme::SquaredNorm, AmplitudeScheme::Hyperspherical};

Vector encoded(const MixtureParams& p, const Vector& x) {
  return encode({x.data(), static_cast<std::size_t>(x.size())}, p).u;
}

} // namespace

TEST(Amplitudes, WeightsSumToOneAndJacobianMatchesDifferences) {
  std::mt19937_64 rng(11);
  for (auto scheme : kSchemes)
    for (int n = 1; n <= 5; ++n) {
      const MixtureParams p = random_params(rng, n, 1, scheme);
      const AmplitudeWeights w = weights(p.amp_raw, scheme, n);
      EXPECT_NEAR(w.weights.sum(), 1.0, 1e-14);
      EXPECT_TRUE((w.weights.array() >= 0.0).all());
      if (p.amp_raw.size() == 0) continue;
      const Matrix fd = fd_jacobian([&](const Vector& r) { return weights(r, scheme, n).weights; }, p.amp_raw);
      EXPECT_LT((fd - w.jacobian).cwiseAbs().maxCoeff(), 1e-8) << to_string(scheme) << " n=" << n;
    }
}

TEST(Amplitudes, AllZeroSquaredNormIsDegenerate) {
  EXPECT_THROW(weights(Vector::Zero(3), AmplitudeScheme::SquaredNorm, 3), DegenerateParameterError);
}

TEST(Amplitudes, AnglesReproduceWeights) {
  Vector w(4);
  w << 0.5, 0.2, 0.0, 0.3;
  const Vector a = angles_from_weights(w);
  EXPECT_LT((weights(a, AmplitudeScheme::Hyperspherical, 4).weights - w).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Amplitudes, SchemeNamesRoundTrip) {
  for (auto s : kSchemes) EXPECT_EQ(parse_scheme(to_string(s)), s);
  EXPECT_THROW(parse_scheme("bogus"), InvalidArgument);
}

TEST(Params, FlattenUnflattenRoundTrip) {
  std::mt19937_64 rng(3);
  for (auto scheme : kSchemes) {
    const MixtureParams p = random_params(rng, 3, 2, scheme);
    const Vector v = p.flatten();
    ASSERT_EQ(v.size(), p.n_params());
    const MixtureParams q = MixtureParams::unflatten(p.layout(), {v.data(), static_cast<std::size_t>(v.size())});
    EXPECT_EQ(q.flatten(), v);
  }
}

TEST(Params, ValidateRejectsBadShapes) {
  std::mt19937_64 rng(4);
  MixtureParams p = random_params(rng, 2, 1, AmplitudeScheme::SquaredNorm);
  p.amp_raw.resize(3);
  EXPECT_THROW(p.validate(), InvalidArgument);
  p = random_params(rng, 2, 1, AmplitudeScheme::SquaredNorm);
  p.log_widths(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(p.validate(), InvalidArgument);
}

TEST(Dataset, RejectsNonFiniteAndEmpty) {
  RowMatrix m(2, 1);
  m << 1.0, std::nan("");
  EXPECT_THROW(Dataset{m}, InvalidArgument);
  EXPECT_THROW(Dataset{RowMatrix(0, 1)}, InvalidArgument);
}

TEST(Encoder, FirstCoordinateIsMixtureCdf) {
  std::mt19937_64 rng(5);
  for (auto scheme : kSchemes)
    for (int t = 0; t < 20; ++t) {
      const MixtureParams p = random_params(rng, 3, 2, scheme);
      const auto x = random_point(rng, 2);
      const EncoderEval ev = encode(x, p);
      // Marginal of the first coordinate is itself a 1D mixture.
      MixtureParams m = p;
      m.means = p.means.leftCols(1);
      m.log_widths = p.log_widths.leftCols(1);
      EXPECT_NEAR(ev.u[0], direct_cdf_1d(m, x[0]), 1e-13);
    }
}

TEST(Encoder, ConditionalCdfMatchesQuadrature) {
  std::mt19937_64 rng(6);
  for (auto scheme : kSchemes)
    for (int t = 0; t < 10; ++t) {
      const MixtureParams p = random_params(rng, 3, 2, scheme);
      const auto x = random_point(rng, 2);
      const auto joint = [&](double y) { return direct_pdf(p, {x[0], y}); };
      const double num = integrate(joint, -20.0, x[1], 1e-14);
      const double den = integrate(joint, -20.0, 20.0, 1e-14);
      EXPECT_NEAR(encode(x, p).u[1], num / den, 1e-9);
    }
}

TEST(Encoder, EncodedValuesStayInUnitCube) {
  std::mt19937_64 rng(7);
  const MixtureParams p = random_params(rng, 2, 3, AmplitudeScheme::SquaredNorm);
  for (double far : {-60.0, 60.0}) {
    const std::vector<double> x{far, -far, far};
    const EncoderEval ev = encode(x, p);
    EXPECT_TRUE((ev.u.array() >= 0.0).all() && (ev.u.array() <= 1.0).all());
    EXPECT_TRUE(std::isfinite(ev.log_pdf));
  }
}

TEST(Encoder, DeterminantEqualsDensity) {
  std::mt19937_64 rng(8);
  for (int d = 1; d <= 3; ++d)
    for (int t = 0; t < 30; ++t) {
      const MixtureParams p = random_params(rng, 3, d, kSchemes[t % 2]);
      const auto x = random_point(rng, d);
      const EncoderEval ev = encode(x, p);
      EXPECT_LT(rel_err(ev.jac_x.determinant(), direct_pdf(p, x)), 1e-9);
      EXPECT_LT(std::abs(ev.log_pdf - std::log(direct_pdf(p, x))), 1e-10);
      // Lower triangular.
      for (int r = 0; r < d; ++r)
        for (int c = r + 1; c < d; ++c) EXPECT_EQ(ev.jac_x(r, c), 0.0);
    }
}

TEST(Encoder, SpatialJacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 30; ++t) {
    const int d = 1 + t % 3;
    const MixtureParams p = random_params(rng, 3, d, kSchemes[t % 2]);
    const auto xs = random_point(rng, d);
    const Vector x = Eigen::Map<const Vector>(xs.data(), d);
    const Matrix fd = fd_jacobian([&](const Vector& v) { return encoded(p, v); }, x);
    const Matrix an = encode(xs, p).jac_x;
    EXPECT_LT((fd - an).cwiseAbs().maxCoeff(), 1e-4 * std::max(1.0, an.cwiseAbs().maxCoeff()));
  }
}

TEST(Encoder, ParameterJacobianMatchesFiniteDifferences) {
  std::mt19937_64 rng(10);
  for (int t = 0; t < 30; ++t) {
    const int d = 1 + t % 3;
    const MixtureParams p = random_params(rng, 3, d, kSchemes[t % 2]);
    const auto xs = random_point(rng, d);
    const ParamLayout l = p.layout();
    const auto u_of = [&](const Vector& m) {
      return encode(xs, MixtureParams::unflatten(l, {m.data(), static_cast<std::size_t>(m.size())})).u;
    };
    const Matrix fd = fd_jacobian(u_of, p.flatten());
    const Matrix an = encode(xs, p).jac_m;
    EXPECT_LT((fd - an).cwiseAbs().maxCoeff(), 1e-4 * std::max(1.0, an.cwiseAbs().maxCoeff()));
  }
}

TEST(Encoder, TranslationIdentityLinksSpatialAndMeanDerivatives) {
  std::mt19937_64 rng(12);
  const MixtureParams p = random_params(rng, 4, 3, AmplitudeScheme::Hyperspherical);
  const EncoderEval ev = encode(random_point(rng, 3), p);
  EXPECT_LT((jac_x_from_means(ev, p) - ev.jac_x).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Density, IntegratesToOne) {
  std::mt19937_64 rng(13);
  const MixtureParams p = random_params(rng, 3, 1, AmplitudeScheme::SquaredNorm);
  const double mass = integrate([&](double x) { return std::exp(log_pdf(std::vector<double>{x}, p)); }, -30, 30);
  EXPECT_NEAR(mass, 1.0, 1e-9);
}

TEST(Density, DimensionMismatchThrows) {
  std::mt19937_64 rng(14);
  const MixtureParams p = random_params(rng, 2, 2, AmplitudeScheme::SquaredNorm);
  EXPECT_THROW(encode(std::vector<double>{0.0}, p), InvalidArgument);
}
