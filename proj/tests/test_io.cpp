#include "test_common.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace occam;
using namespace occam::testing;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const fs::path p = fs::temp_directory_path() / "occam_io_tests";
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::pair<Dataset, FitResult>& fitted_1d() {
  static const auto v = [] {
    Dataset d = io::generate(io::default_spec(1, 80, 2));
    FitConfig c;
    c.max_components = 2;
    c.stage_budgets = {500, 800, 500, 500};
    return std::pair{d, fit(d, c)};
  }();
  return v;
}

} // namespace

TEST(Generator, DefaultWeightsAreReproduced) {
  // Shrinking the widths leaves the random stream and thus the component
  // choices unchanged, but makes every draw attributable to its component.
  io::GeneratorSpec s = io::default_spec(2, 10000, 3);
  for (auto& c : s.components)
    for (auto& w : c.width) w = 1e-3;
  const Dataset d = io::generate(s);
  int big = 0, right = 0;
  for (int i = 0; i < d.size(); ++i) {
    if (d.points(i, 1) < 1.0) ++big;
    else if (d.points(i, 0) > 0) ++right;
  }
  EXPECT_NEAR(big / 1e4, 0.8, 0.02);
  EXPECT_NEAR(right / 1e4, 0.1, 0.02);
  EXPECT_NEAR((d.size() - big - right) / 1e4, 0.1, 0.02);
}

TEST(Generator, SingleRowAndDeterminism) {
  const Dataset one = io::generate(io::default_spec(2, 1, 77));
  EXPECT_EQ(one.size(), 1);
  EXPECT_TRUE(one.points.allFinite());
  EXPECT_EQ(io::generate(io::default_spec(1, 50, 5)).points, io::generate(io::default_spec(1, 50, 5)).points);
  EXPECT_NE(io::generate(io::default_spec(1, 50, 5)).points, io::generate(io::default_spec(1, 50, 6)).points);
}

TEST(Generator, ProjectionKeepsFirstAxis) {
  const Dataset d1 = io::generate(io::default_spec(1, 30, 8));
  const Dataset d2 = io::generate(io::default_spec(2, 30, 8));
  ASSERT_EQ(d1.n_dim(), 1);
  EXPECT_EQ(d1.points.col(0), d2.points.col(0));
}

TEST(Generator, InvalidSpecRejected) {
  io::GeneratorSpec s = io::default_spec();
  s.components[0].weight = 0.5;
  EXPECT_THROW(io::generate(s), InvalidArgument);
  s = io::default_spec();
  s.components[1].width[0] = 0.0;
  EXPECT_THROW(io::generate(s), InvalidArgument);
}

TEST(Csv, RoundTripIsExact) {
  std::mt19937_64 rng(1);
  const Dataset d = random_dataset(rng, 200, 3, 1e-3);
  std::stringstream ss;
  io::write_csv(ss, d);
  const Dataset back = io::read_csv(ss);
  EXPECT_EQ(back.points, d.points);
}

TEST(Csv, CommentsAndBlankLinesSkipped) {
  std::stringstream ss("# header comment\n1.5, 2\n\n  -3e-2,4 # trailing\n");
  const Dataset d = io::read_csv(ss);
  ASSERT_EQ(d.size(), 2);
  EXPECT_EQ(d.points(1, 0), -3e-2);
}

TEST(Csv, MalformedRowsRejected) {
  std::stringstream ragged("1,2\n3\n");
  EXPECT_THROW(io::read_csv(ragged), FormatError);
  std::stringstream junk("1,abc\n");
  EXPECT_THROW(io::read_csv(junk), FormatError);
  std::stringstream empty("# nothing\n");
  EXPECT_THROW(io::read_csv(empty), FormatError);
  EXPECT_THROW(io::read_csv(std::string("/nonexistent/file.csv")), IoError);
}

TEST(ModelFile, SaveLoadSaveIsByteIdentical) {
  const auto& [d, f] = fitted_1d();
  const fs::path a = temp_dir() / "a.json", b = temp_dir() / "b.json";
  io::save_model(a.string(), f);
  io::save_model(b.string(), io::load_model(a.string()));
  EXPECT_EQ(slurp(a), slurp(b));
}

TEST(ModelFile, LoadedModelReproducesStoredQ) {
  const auto& [d, f] = fitted_1d();
  const FitResult g = io::model_from_string(io::model_to_string(f));
  EXPECT_EQ(g.params.flatten(), f.params.flatten());
  EXPECT_EQ(g.delta_m.log_values, f.delta_m.log_values);
  const QBreakdown q = q_total(d, g.params, g.delta_m, g.mode, g.delta_x);
  EXPECT_LT(rel_err(q.q_total, g.q.q_total), 1e-10);
  EXPECT_EQ(g.provenance.config_hash, f.provenance.config_hash);
}

TEST(ModelFile, NonFiniteValuesSurvive) {
  auto f = fitted_1d().second;
  f.q.q_total = kInf;
  f.q.q_r = -kInf;
  const FitResult g = io::model_from_string(io::model_to_string(f));
  EXPECT_EQ(g.q.q_total, kInf);
  EXPECT_EQ(g.q.q_r, -kInf);
}

TEST(ModelFile, NegativeWidthRejected) {
  nlohmann::json j = io::model_to_json(fitted_1d().second);
  j["widths"][0][0] = -0.5;
  EXPECT_THROW(io::model_from_json(j), InvalidArgument);
}

TEST(ModelFile, VersionAndShapeChecked) {
  nlohmann::json j = io::model_to_json(fitted_1d().second);
  j["version"] = 99;
  EXPECT_THROW(io::model_from_json(j), FormatError);
  j = io::model_to_json(fitted_1d().second);
  j["log_delta_m"].erase(0);
  EXPECT_THROW(io::model_from_json(j), InvalidArgument);
  EXPECT_THROW(io::model_from_string("{not json"), FormatError);
  EXPECT_THROW(io::load_model("/nonexistent/model.json"), IoError);
}

TEST(Crosstab, ZeroDiagonalPureAndFinite) {
  std::vector<Dataset> samples;
  std::vector<FitResult> fits;
  const Dataset base = io::generate(io::default_spec(1, 60, 3));
  FitConfig c;
  c.max_components = 2;
  c.stage_budgets = {400, 600, 400, 400};
  for (int b = 0; b < 3; ++b) {
    samples.push_back(io::bootstrap(base, 100 + b));
    fits.push_back(fit(samples.back(), c));
  }
  const io::CrossTable t = io::crosstab(fits, samples, QMode::Global);
  const io::CrossTable t2 = io::crosstab(fits, samples, QMode::Global);
  for (int i = 0; i < 3; ++i) {
    EXPECT_EQ(t.rel_q(i, i), 0.0);
    EXPECT_EQ(t.rel_entropy(i, i), 0.0);
    for (int j = 0; j < 3; ++j) EXPECT_TRUE(std::isfinite(t.rel_entropy(i, j)));
  }
  EXPECT_TRUE(t.rel_q.isApprox(t2.rel_q) || t.rel_q == t2.rel_q);
  EXPECT_EQ(t.q.cwiseEqual(t2.q).count(), 9);
  // Row normalization by the model's own training-sample value.
  EXPECT_NEAR(t.rel_entropy(0, 1), (t.q_l(0, 1) - t.q_l(0, 0)) / t.q_l(0, 0), 1e-15);

  std::stringstream text, csv;
  io::write_crosstab_text(text, t);
  io::write_crosstab_csv(csv, t);
  EXPECT_NE(text.str().find("relative Q"), std::string::npos);
  int lines = 0;
  for (std::string l; std::getline(csv, l);) ++lines;
  EXPECT_EQ(lines, 1 + 9);
  fits.pop_back();
  EXPECT_THROW(io::crosstab(fits, samples, QMode::Global), InvalidArgument);
}

TEST(Crosstab, InvalidCellsAreInfinite) {
  const auto& [d, f] = fitted_1d();
  FitResult bad = f;
  bad.delta_m = DeltaM::uniform(f.params.n_params(), 1.0);
  const io::CrossTable t = io::crosstab({f, bad}, {d, d}, QMode::Global);
  EXPECT_EQ(t.rel_q(0, 0), 0.0);
  EXPECT_EQ(t.rel_q(1, 0), kInf);
  EXPECT_TRUE(std::isfinite(t.rel_entropy(1, 0)));
}

TEST(PlotData, OneDimensionalGridIntegratesToOne) {
  const auto& [d, f] = fitted_1d();
  const io::PlotData p = io::plotdata(f.params, d);
  ASSERT_EQ(p.density.rows.size(), 512u);
  EXPECT_EQ(p.density.header.size(), 2u + f.params.n_components());
  double mass = 0.0;
  for (std::size_t i = 1; i < p.density.rows.size(); ++i)
    mass += 0.5 * (p.density.rows[i][1] + p.density.rows[i - 1][1]) *
            (p.density.rows[i][0] - p.density.rows[i - 1][0]);
  EXPECT_NEAR(mass, 1.0, 0.01);
  // Components add up to the mixture.
  const auto& r = p.density.rows[200];
  double s = 0.0;
  for (std::size_t c = 2; c < r.size(); ++c) s += r[c];
  EXPECT_NEAR(s, r[1], 1e-12 * r[1]);
  EXPECT_EQ(p.sample.rows.size(), static_cast<std::size_t>(d.size()));
}

TEST(PlotData, TwoDimensionalGridShape) {
  std::mt19937_64 rng(2);
  const Dataset d = random_dataset(rng, 20, 2);
  const MixtureParams m = random_params(rng, 2, 2, AmplitudeScheme::SquaredNorm);
  io::GridSpec g;
  g.points = 128;
  const io::PlotData p = io::plotdata(m, d, g);
  EXPECT_EQ(p.density.rows.size(), 16384u);
  EXPECT_EQ(p.density.header, (std::vector<std::string>{"x", "y", "density"}));
}

TEST(PlotData, ThreeDimensionsUnsupported) {
  std::mt19937_64 rng(3);
  const Dataset d = random_dataset(rng, 5, 3);
  EXPECT_THROW(io::plotdata(random_params(rng, 1, 3, AmplitudeScheme::SquaredNorm), d), InvalidArgument);
}

TEST(PlotData, WritesFiles) {
  const auto& [d, f] = fitted_1d();
  const std::string prefix = (temp_dir() / "plot").string();
  io::write_plotdata(prefix, io::plotdata(f.params, d));
  EXPECT_TRUE(fs::exists(prefix + "_density.csv"));
  EXPECT_TRUE(fs::exists(prefix + "_sample.csv"));
}
