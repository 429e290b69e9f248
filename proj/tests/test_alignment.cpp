#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "oracles.hpp"
#include "test_util.hpp"
#include "xling/alignment.hpp"
#include "xling/error.hpp"

using namespace xling;

namespace {

Matrix scaled(const Matrix& m, double s) {
  Matrix out = m;
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) *= s;
  return out;
}

}  // namespace

TEST(Cka, SelfSimilarityIsOne) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 20; ++t) {
    const Matrix x = testutil::random_matrix(rng, 12, 7);
    EXPECT_NEAR(linear_cka(x, x), 1.0, 1e-12);
  }
}

TEST(Cka, IntegerFixtureMatchesGramOracle) {
  const Matrix x = Matrix::from_rows({{1, 2, 0}, {0, 1, 3}, {2, -1, 1}, {4, 0, -2}});
  const Matrix y = Matrix::from_rows({{3, 1, 1}, {-1, 2, 0}, {0, 0, 5}, {1, 1, 1}});
  EXPECT_NEAR(linear_cka(x, y), oracle::cka(x, y), 1e-9);
  EXPECT_NEAR(linear_cka(x, y, false), oracle::cka(x, y, false), 1e-9);
}

// Property sweep: random shapes against the Gram-route oracle; symmetric and
// within [0, 1].
TEST(Cka, RandomInstancesMatchOracle) {
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> nd(3, 20), dd(1, 16);
  for (int t = 0; t < 150; ++t) {
    const int n = nd(rng), d1 = dd(rng), d2 = dd(rng);
    const Matrix x = testutil::random_matrix(rng, n, d1);
    Matrix y = testutil::random_matrix(rng, n, d2);
    const double v = linear_cka(x, y);
    EXPECT_NEAR(v, oracle::cka(x, y), 1e-9);
    EXPECT_NEAR(linear_cka(x, y, false), oracle::cka(x, y, false), 1e-9);
    EXPECT_NEAR(linear_cka(y, x), v, 1e-12);
    EXPECT_GE(v, -1e-12);
    EXPECT_LE(v, 1 + 1e-12);
  }
}

TEST(Cka, OrthogonalAndScaleInvariance) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    const Matrix x = testutil::random_matrix(rng, 15, 8);
    const Matrix y = testutil::random_matrix(rng, 15, 6);
    const double base = linear_cka(x, y);
    const Matrix q = testutil::random_orthogonal(rng, 8);
    EXPECT_NEAR(linear_cka(x * q, y), base, 1e-6);
    EXPECT_NEAR(linear_cka(x, scaled(y, 7.5)), base, 1e-6);
    EXPECT_NEAR(linear_cka(scaled(x, 0.01), y), base, 1e-6);
  }
}

TEST(Cka, NoSignalIsUndefined) {
  const Matrix flat = Matrix::from_rows({{1, 2}, {1, 2}, {1, 2}});
  const Matrix y = Matrix::from_rows({{1, 0}, {0, 1}, {1, 1}});
  EXPECT_TRUE(std::isnan(linear_cka(flat, y)));
  EXPECT_THROW(linear_cka(flat, Matrix(4, 2)), DataError);
}

TEST(Cosine, PairExamples) {
  std::mt19937_64 rng(4);
  const Matrix x = testutil::random_matrix(rng, 6, 5);
  EXPECT_NEAR(cosine_pair(x, scaled(x, 3)), 1.0, 1e-12);
  EXPECT_NEAR(cosine_pair(x, scaled(x, -1)), -1.0, 1e-12);
  // Rows: (1,0)/(1,1), (0,2)/(3,0), (1,1)/(-1,-2).
  const Matrix a = Matrix::from_rows({{1, 0}, {0, 2}, {1, 1}});
  const Matrix b = Matrix::from_rows({{1, 1}, {3, 0}, {-1, -2}});
  const double want = (1 / std::sqrt(2.0) + 0.0 + (-3) / (std::sqrt(2.0) * std::sqrt(5.0))) / 3;
  EXPECT_NEAR(cosine_pair(a, b), want, 1e-12);
}

TEST(Cosine, ZeroRowNamed) {
  const Matrix a = Matrix::from_rows({{1, 0}, {0, 0}, {1, 1}});
  try {
    cosine_pair(a, a);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos) << e.what();
  }
  EXPECT_THROW(make_representation("en", 1, a), DataError);
  EXPECT_THROW(make_representation("en", 1, Matrix::from_rows({{1, 0}})), DataError);
}

TEST(Cosine, MonoExamples) {
  EXPECT_NEAR(cosine_mono(Matrix::from_rows({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}})), 1.0, 1e-12);
  EXPECT_NEAR(cosine_mono(Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}})), 0.0, 1e-12);
  const Matrix x = Matrix::from_rows({{1, 2, 0}, {0, 1, 1}, {3, 0, 1}, {1, 1, 1}});
  EXPECT_NEAR(cosine_mono(x), oracle::cosine_mono(x), 1e-12);
  EXPECT_THROW(cosine_mono(Matrix::from_rows({{1, 0}})), DataError);
}

// Property: cosine_pair ignores positive per-row scaling of either side.
TEST(Cosine, PerRowScalingInvariance) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> s(0.1, 10);
  for (int t = 0; t < 30; ++t) {
    const Matrix x = testutil::random_matrix(rng, 9, 4);
    const Matrix y = testutil::random_matrix(rng, 9, 4);
    Matrix y2 = y;
    for (std::size_t r = 0; r < 9; ++r) {
      const double f = s(rng);
      for (std::size_t c = 0; c < 4; ++c) y2(r, c) *= f;
    }
    EXPECT_NEAR(cosine_pair(x, y2), cosine_pair(x, y), 1e-12);
  }
}

TEST(Cosine, RandomInstancesMatchOracle) {
  std::mt19937_64 rng(6);
  std::uniform_int_distribution<int> nd(2, 20), dd(1, 16);
  for (int t = 0; t < 150; ++t) {
    const int n = nd(rng), d = dd(rng);
    // A shared offset keeps baselines away from zero.
    Matrix x = testutil::random_matrix(rng, n, d), y = testutil::random_matrix(rng, n, d);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      x(r, 0) += 3;
      y(r, 0) += 3;
    }
    EXPECT_NEAR(cosine_pair(x, y), oracle::cosine_pair(x, y), 1e-9);
    EXPECT_NEAR(cosine_mono(x), oracle::cosine_mono(x), 1e-9);
    const auto nc = cosine_norm(x, y);
    EXPECT_NEAR(nc.value, oracle::cosine_norm(x, y), 1e-9);
    EXPECT_EQ(nc.value, cosine_norm(y, x).value);
  }
}

TEST(CosineNorm, HarmonicMeanIdentities) {
  // X == Y: both ratios are 1 / mono, so the result is 1 / mono and can exceed 1.
  const Matrix x = Matrix::from_rows({{1, 0.2}, {0.3, 1}, {1, 1}});
  const auto self = cosine_norm(x, x);
  EXPECT_NEAR(self.value, 1.0 / cosine_mono(x), 1e-12);
  EXPECT_GT(self.value, 1.0);
  // Equal baselines b: the harmonic mean of two equal ratios is pair / b.
  Matrix rot = x;  // x rotated by 40 degrees
  const double c = std::cos(0.7), s = std::sin(0.7);
  for (std::size_t r = 0; r < 3; ++r) {
    rot(r, 0) = c * x(r, 0) - s * x(r, 1);
    rot(r, 1) = s * x(r, 0) + c * x(r, 1);
  }
  const auto nc = cosine_norm(x, rot);
  EXPECT_NEAR(nc.mono_x, nc.mono_y, 1e-12);
  EXPECT_NEAR(nc.value, nc.pair / nc.mono_x, 1e-12);
}

// Two rows per language in the plane, placed so that pair = 0.6 and the
// baselines are 0.8 and 0.5: ratios 0.75 and 1.2, harmonic mean 1.8 / 1.95.
TEST(CosineNorm, HandEvaluatedFixture) {
  const double alpha = std::acos(0.8), beta = std::acos(0.5), delta = beta - alpha;
  const double theta = std::acos(1.2 / (2 * std::cos(delta / 2))) - delta / 2;
  const Matrix x = Matrix::from_rows({{1, 0}, {std::cos(alpha), std::sin(alpha)}});
  const Matrix y = Matrix::from_rows({{std::cos(theta), std::sin(theta)},
                                      {std::cos(theta + beta), std::sin(theta + beta)}});
  const auto nc = cosine_norm(x, y);
  EXPECT_NEAR(nc.pair, 0.6, 1e-12);
  EXPECT_NEAR(nc.mono_x, 0.8, 1e-12);
  EXPECT_NEAR(nc.mono_y, 0.5, 1e-12);
  EXPECT_NEAR(nc.value, 1.8 / 1.95, 1e-12);
  EXPECT_NEAR(nc.value, 0.923, 5e-4);
  EXPECT_TRUE(nc.reliable);
}

TEST(CosineNorm, TinyBaselineFlagged) {
  const Matrix basis = Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
  const Matrix y = Matrix::from_rows({{1, 1, 0}, {0, 1, 1}, {1, 0, 1}});
  EXPECT_FALSE(cosine_norm(basis, y).reliable);
  EXPECT_TRUE(cosine_norm(y, y).reliable);
}

// Property: permuting the shared example order leaves every metric unchanged.
TEST(Alignment, PermutationEquivariance) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 20; ++t) {
    Matrix x = testutil::random_matrix(rng, 10, 5), y = testutil::random_matrix(rng, 10, 5);
    for (std::size_t r = 0; r < 10; ++r) {
      x(r, 1) += 2;
      y(r, 1) += 2;
    }
    std::vector<std::size_t> order(10);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const Matrix xp = x.permuted_rows(order), yp = y.permuted_rows(order);
    EXPECT_NEAR(linear_cka(xp, yp), linear_cka(x, y), 1e-12);
    EXPECT_NEAR(cosine_pair(xp, yp), cosine_pair(x, y), 1e-12);
    EXPECT_NEAR(cosine_mono(xp), cosine_mono(x), 1e-12);
    EXPECT_NEAR(cosine_norm(xp, yp).value, cosine_norm(x, y).value, 1e-12);
  }
}

TEST(Pca, EigenvaluesMatchDenseSolver) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> nd(5, 20), dd(2, 10);
  for (int t = 0; t < 20; ++t) {
    const int n = nd(rng), d = dd(rng);
    const std::size_t k = std::min<std::size_t>(3, std::min(n - 1, d));
    const Matrix x = testutil::random_matrix(rng, n, d);
    const auto res = pca_project(x, k);
    const auto want = oracle::pca_eigenvalues(x, k);
    for (std::size_t j = 0; j < k; ++j) EXPECT_NEAR(res.eigenvalues[j], want[j], 1e-6);
    for (std::size_t j = 1; j < k; ++j) EXPECT_LE(res.eigenvalues[j], res.eigenvalues[j - 1]);
  }
}

// Property: each eigenvalue equals the sample variance of its coordinates, and
// each component's largest loading is positive.
TEST(Pca, EigenvaluesAreCoordinateVariances) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 10; ++t) {
    const Matrix x = testutil::random_matrix(rng, 30, 6);
    const auto res = pca_project(x, 4);
    for (std::size_t j = 0; j < 4; ++j) {
      double m = 0, ss = 0;
      for (std::size_t i = 0; i < 30; ++i) m += res.coordinates(i, j);
      m /= 30;
      for (std::size_t i = 0; i < 30; ++i) ss += (res.coordinates(i, j) - m) * (res.coordinates(i, j) - m);
      EXPECT_NEAR(ss / 29, res.eigenvalues[j], 1e-9);
      std::size_t arg = 0;
      for (std::size_t c = 1; c < 6; ++c)
        if (std::abs(res.components(j, c)) > std::abs(res.components(j, arg))) arg = c;
      EXPECT_GT(res.components(j, arg), 0);
    }
  }
}

TEST(Pca, ExactSubspaceReconstructs) {
  std::mt19937_64 rng(10);
  const Matrix coeffs = testutil::random_matrix(rng, 25, 2);
  const Matrix basis = testutil::random_matrix(rng, 2, 7);
  Matrix x = coeffs * basis;
  for (std::size_t r = 0; r < 25; ++r)
    for (std::size_t c = 0; c < 7; ++c) x(r, c) += c;  // offset, removed by centering
  const auto res = pca_project(x, 2);
  const Matrix back = res.coordinates * res.components;
  for (std::size_t r = 0; r < 25; ++r)
    for (std::size_t c = 0; c < 7; ++c) EXPECT_NEAR(back(r, c) + res.mean[c], x(r, c), 1e-9);
}

TEST(Pca, IsotropicCloudHasFlatSpectrum) {
  std::mt19937_64 rng(11);
  const auto res = pca_project(testutil::random_matrix(rng, 500, 8), 2);
  EXPECT_LT(res.eigenvalues[0] / res.eigenvalues[1], 3.0);
}

TEST(Pca, TwoClustersRecoverTheAxis) {
  std::mt19937_64 rng(12);
  Matrix x = testutil::random_matrix(rng, 100, 6, 0.3);
  std::vector<double> axis{1, -2, 0.5, 0, 1, 3};
  double norm = 0;
  for (double a : axis) norm += a * a;
  norm = std::sqrt(norm);
  for (std::size_t r = 0; r < 100; ++r)
    for (std::size_t c = 0; c < 6; ++c) x(r, c) += (r < 50 ? 2.0 : -2.0) * axis[c] / norm;
  const auto res = pca_project(x, 1);
  double cos = 0;
  for (std::size_t c = 0; c < 6; ++c) cos += res.components(0, c) * axis[c] / norm;
  EXPECT_GT(std::abs(cos), 0.99);
}

TEST(Pca, ComponentCountChecked) {
  std::mt19937_64 rng(13);
  const Matrix x = testutil::random_matrix(rng, 4, 6);
  EXPECT_THROW(pca_project(x, 4), DataError);
  EXPECT_THROW(pca_project(x, 0), DataError);
  EXPECT_NO_THROW(pca_project(x, 3));
  EXPECT_THROW(pca_project(testutil::random_matrix(rng, 10, 2), 3), DataError);
}

namespace {

RepresentationSet make_set(const std::vector<std::string>& langs, const std::vector<int>& layers,
                           std::mt19937_64& rng, double noise) {
  RepresentationSet s;
  s.languages = langs;
  s.layers = layers;
  for (int layer : layers) {
    const Matrix base = testutil::random_matrix(rng, 12, 5);
    for (std::size_t l = 0; l < langs.size(); ++l) {
      Matrix m = base;
      const Matrix e = testutil::random_matrix(rng, 12, 5, noise * static_cast<double>(l));
      for (std::size_t r = 0; r < 12; ++r)
        for (std::size_t c = 0; c < 5; ++c) m(r, c) += e(r, c) + 1.0;
      s.states[{langs[l], layer}] = m;
    }
  }
  return s;
}

}  // namespace

TEST(LayerSweep, ShapesAndSymmetry) {
  std::mt19937_64 rng(14);
  const auto set = make_set({"a", "b", "c"}, {1, 2, 3}, rng, 0.5);
  for (auto metric : {SimilarityMetric::cka, SimilarityMetric::cka_uncentered, SimilarityMetric::cosine,
                      SimilarityMetric::cosine_norm}) {
    const auto sweep = layer_sweep(set, metric);
    ASSERT_EQ(sweep.matrices.size(), 3u);
    for (const auto& [layer, mat] : sweep.matrices) {
      ASSERT_EQ(mat.size(), 3u);
      for (std::size_t i = 0; i < 3; ++i) {
        ASSERT_EQ(mat[i].size(), 3u);
        EXPECT_EQ(mat[i][i], 1.0);
        for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(mat[i][j], mat[j][i]);
      }
    }
    EXPECT_EQ(sweep.cells.size(), 9u);
    ASSERT_EQ(sweep.curve.size(), 3u);
    EXPECT_EQ(sweep.curve[0].n_pairs, 3u);
  }
}

TEST(LayerSweep, CurveIsMeanOverPairsWithStderr) {
  std::mt19937_64 rng(15);
  const auto sweep = layer_sweep(make_set({"a", "b", "c", "d"}, {2}, rng, 0.7), SimilarityMetric::cka);
  std::vector<double> v;
  for (const auto& c : sweep.cells) v.push_back(c.value);
  ASSERT_EQ(v.size(), 6u);
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / 6;
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  EXPECT_NEAR(sweep.curve[0].mean, m, 1e-12);
  EXPECT_NEAR(sweep.curve[0].stderr_, std::sqrt(ss / 5) / std::sqrt(6.0), 1e-12);
  // Per-language mean: the mean of the three cells touching "a".
  double a = 0;
  for (const auto& c : sweep.cells)
    if (c.l1 == "a" || c.l2 == "a") a += c.value / 3;
  EXPECT_NEAR(sweep.per_language_mean().at("a"), a, 1e-12);
}

TEST(LayerSweep, ClonesSitAtOne) {
  std::mt19937_64 rng(16);
  const auto set = make_set({"a", "b", "c"}, {1, 2}, rng, 0.0);
  for (auto metric : {SimilarityMetric::cka, SimilarityMetric::cosine}) {
    for (const auto& p : layer_sweep(set, metric).curve) EXPECT_NEAR(p.mean, 1.0, 1e-12);
  }
}

TEST(LayerSweep, PermutedExamplesLowerCka) {
  std::mt19937_64 rng(17);
  RepresentationSet s;
  s.languages = {"a", "b"};
  s.layers = {1};
  const Matrix x = testutil::random_matrix(rng, 20, 6);
  std::vector<std::size_t> order(20);
  std::iota(order.rbegin(), order.rend(), 0);
  s.states[{"a", 1}] = x;
  s.states[{"b", 1}] = x.permuted_rows(order);
  EXPECT_LT(layer_sweep(s, SimilarityMetric::cka).cells[0].value, 0.99);
}

TEST(LayerSweep, FlaggedCellsLeaveTheCurve) {
  RepresentationSet s;
  s.languages = {"a", "b", "c"};
  s.layers = {1};
  s.states[{"a", 1}] = Matrix::from_rows({{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});  // mono baseline 0
  s.states[{"b", 1}] = Matrix::from_rows({{1, 1, 0}, {0, 1, 1}, {1, 0, 1}});
  s.states[{"c", 1}] = Matrix::from_rows({{1, 1, 0.5}, {0, 1, 1}, {1, 0.2, 1}});
  const auto sweep = layer_sweep(s, SimilarityMetric::cosine_norm);
  int flagged = 0;
  for (const auto& c : sweep.cells) flagged += !c.flag.empty();
  EXPECT_EQ(flagged, 2);
  EXPECT_EQ(sweep.curve[0].n_pairs, 1u);
  EXPECT_EQ(sweep.curve[0].mean, sweep.matrices.at(1)[1][2]);
}

TEST(LayerSweep, UndefinedCellsFlagged) {
  RepresentationSet s;
  s.languages = {"a", "b"};
  s.layers = {1};
  s.states[{"a", 1}] = Matrix::from_rows({{1, 2}, {1, 2}, {1, 2}});
  s.states[{"b", 1}] = Matrix::from_rows({{1, 0}, {0, 1}, {1, 1}});
  const auto sweep = layer_sweep(s, SimilarityMetric::cka);
  EXPECT_EQ(sweep.cells[0].flag, "undefined");
  EXPECT_EQ(sweep.curve[0].n_pairs, 0u);
  EXPECT_TRUE(std::isnan(sweep.per_language_mean().at("a")));
}

TEST(LayerSweep, ManifestViolationsReported) {
  testutil::TempDir tmp("align");
  ExperimentManifest m;
  m.languages = {"a", "b"};
  m.layer_indices = {1};
  m.n_examples = 4;
  m.d_model = 3;
  m.base_dir = tmp.path();
  std::mt19937_64 rng(18);
  save_tensor(testutil::random_tensor(rng, {4, 3}), tmp / "a.xlt");
  m.tensor_paths[{"a", 1}] = "a.xlt";
  try {
    layer_sweep(m, SimilarityMetric::cka);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("(b, layer 1)"), std::string::npos);
  }
  save_tensor(testutil::random_tensor(rng, {4, 3}), tmp / "b.xlt");
  m.tensor_paths[{"b", 1}] = "b.xlt";
  EXPECT_EQ(layer_sweep(m, SimilarityMetric::cka).cells.size(), 1u);
}

TEST(Metric, Names) {
  for (auto m : {SimilarityMetric::cka, SimilarityMetric::cka_uncentered, SimilarityMetric::cosine,
                 SimilarityMetric::cosine_norm}) {
    EXPECT_EQ(parse_similarity_metric(to_string(m)), m);
  }
  EXPECT_THROW(parse_similarity_metric("rbf"), UsageError);
}
