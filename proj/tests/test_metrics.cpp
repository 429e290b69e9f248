#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "test_util.hpp"
#include "xling/error.hpp"
#include "xling/metrics.hpp"

using namespace xling;

namespace {

RankVector rv(std::vector<double> ranks, std::size_t n_items = 1) {
  RankVector v;
  v.language = "x";
  for (std::size_t i = 0; i < n_items; ++i) v.item_ids.push_back("q" + std::to_string(i));
  v.ranks = std::move(ranks);
  return v;
}

CorrectnessSet cs(std::set<std::string> correct, std::map<std::string, int> wrong = {}) {
  return {"x", std::move(correct), std::move(wrong)};
}

}  // namespace

TEST(Spearman, Examples) {
  EXPECT_DOUBLE_EQ(consistency(rv({1, 2, 3, 4}), rv({1, 2, 3, 4})), 1.0);
  EXPECT_NEAR(consistency(rv({1, 2, 3, 4}), rv({2, 1, 3, 4})), 0.8, 1e-15);
  EXPECT_NEAR(consistency(rv({1, 2, 3, 4}), rv({4, 3, 2, 1})), -1.0, 1e-15);
}

TEST(Spearman, FullyTiedIsUndefined) {
  EXPECT_TRUE(std::isnan(consistency(rv({2.5, 2.5, 2.5, 2.5}), rv({1, 2, 3, 4}))));
}

TEST(Spearman, MismatchedOrderingRejected) {
  RankVector a = rv({1, 2, 3, 4, 1, 2, 3, 4}, 2), b = a;
  std::swap(b.item_ids[0], b.item_ids[1]);
  EXPECT_THROW(consistency(a, b), DataError);
}

// Oracle sweep: tie-heavy and tie-free instances against counting ranks and
// the closed-form d^2 formula.
TEST(Spearman, MatchesBruteForce) {
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<int> nd(3, 20), level(0, 4);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 200; ++trial) {
    const int n = nd(rng);
    std::vector<double> x(n), y(n);
    const bool ties = trial % 2 == 0;
    for (int i = 0; i < n; ++i) {
      x[i] = ties ? level(rng) : g(rng);
      y[i] = ties ? level(rng) : g(rng);
    }
    const double want = oracle::spearman(x, y);
    const double got = spearman(x, y);
    if (std::isnan(want)) {
      EXPECT_TRUE(std::isnan(got));
      continue;
    }
    EXPECT_NEAR(got, want, 1e-9);
    EXPECT_EQ(spearman(x, y), spearman(y, x));
    if (!ties) {
      const auto rx = oracle::ranks(x), ry = oracle::ranks(y);
      double d2 = 0;
      for (int i = 0; i < n; ++i) d2 += (rx[i] - ry[i]) * (rx[i] - ry[i]);
      EXPECT_NEAR(got, 1 - 6 * d2 / (n * (double(n) * n - 1)), 1e-9);
    }
  }
}

TEST(Pearson, Examples) {
  const std::vector<double> x{1, 2, 3, 4, 5};
  std::vector<double> y;
  for (double v : x) y.push_back(2 * v + 1);
  EXPECT_NEAR(pearson(x, y).r, 1.0, 1e-15);
  for (auto& v : y) v = -v;
  EXPECT_NEAR(pearson(x, y).r, -1.0, 1e-15);
  // Direct formula: sxy = 10, sxx = 10, syy = 14.8.
  const auto r = pearson(x, std::vector<double>{2, 1, 4, 3, 6});
  EXPECT_NEAR(r.r, 10 / std::sqrt(148.0), 1e-15);
  EXPECT_NEAR(r.r, 0.8219949, 1e-7);
}

TEST(Pearson, ZeroVarianceUndefined) {
  const auto r = pearson(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3});
  EXPECT_FALSE(r.defined());
  EXPECT_TRUE(std::isnan(r.p));
  EXPECT_THROW(pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2}), DataError);
}

TEST(Pearson, PValueKnownCases) {
  // dof = 1: p = 1 - (2/pi) asin|r|.
  EXPECT_NEAR(t_test_p_value(0.5, 3), 1 - 2 / std::numbers::pi * std::asin(0.5), 1e-12);
  // dof = 2: p = 1 - |r|.
  EXPECT_NEAR(t_test_p_value(0.3, 4), 0.7, 1e-12);
  EXPECT_NEAR(t_test_p_value(0.0, 10), 1.0, 1e-12);
  EXPECT_EQ(t_test_p_value(1.0, 10), 0.0);
}

TEST(Pearson, MatchesBruteForce) {
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> nd(3, 20);
  std::normal_distribution<double> g;
  for (int trial = 0; trial < 150; ++trial) {
    const int n = nd(rng);
    std::vector<double> x(n), y(n);
    const double coupling = (trial % 5) * 0.5;
    for (int i = 0; i < n; ++i) {
      x[i] = g(rng);
      y[i] = coupling * x[i] + g(rng);
    }
    const auto got = pearson(x, y);
    EXPECT_NEAR(got.r, oracle::pearson(x, y), 1e-9);
    EXPECT_NEAR(got.p, oracle::p_value(got.r, got.n), 1e-9) << "r=" << got.r << " n=" << n;
  }
}

TEST(Pearson, Stars) {
  EXPECT_EQ(significance_stars(0.0005), "***");
  EXPECT_EQ(significance_stars(0.005), "**");
  EXPECT_EQ(significance_stars(0.03), "*");
  EXPECT_EQ(significance_stars(0.2), "");
  EXPECT_EQ(significance_stars(std::nan("")), "");
}

TEST(Transfer, PositiveExamples) {
  EXPECT_NEAR(positive_transfer(cs({"1", "2", "3"}), cs({"2", "3", "4"})), 2.0 / 3.0, 1e-15);
  EXPECT_EQ(positive_transfer(cs({"1", "2"}), cs({"1", "2", "3"})), 1.0);
  EXPECT_EQ(positive_transfer(cs({"1", "2"}), cs({"3"})), 0.0);
  EXPECT_TRUE(std::isnan(positive_transfer(cs({}), cs({"3"}))));
}

TEST(Transfer, NegativeExamples) {
  const auto a = cs({}, {{"1", 0}, {"2", 1}, {"3", 2}, {"4", 3}});
  EXPECT_EQ(negative_transfer(a, a), 1.0);
  const auto shifted = cs({}, {{"1", 1}, {"2", 2}, {"3", 3}, {"4", 0}});
  EXPECT_EQ(negative_transfer(a, shifted), 0.0);
  const auto half = cs({"3"}, {{"1", 0}, {"2", 1}, {"4", 2}});
  EXPECT_EQ(negative_transfer(a, half), 0.5);
  EXPECT_TRUE(std::isnan(negative_transfer(cs({"1"}), a)));
}

// Oracle sweep over random prediction vectors, computing both ratios from
// raw (prediction, gold) arrays.
TEST(Transfer, MatchesBruteForce) {
  std::mt19937_64 rng(303);
  std::uniform_int_distribution<int> nd(1, 20), jd(2, 5);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = nd(rng), J = jd(rng);
    std::uniform_int_distribution<int> pick(0, J - 1);
    std::vector<int> gold(n), p1(n), p2(n);
    CorrectnessSet c1{"a", {}, {}}, c2{"b", {}, {}};
    for (int i = 0; i < n; ++i) {
      gold[i] = pick(rng);
      p1[i] = pick(rng);
      p2[i] = pick(rng);
      const std::string id = "i" + std::to_string(i);
      if (p1[i] == gold[i]) c1.correct_ids.insert(id); else c1.wrong_answers[id] = p1[i];
      if (p2[i] == gold[i]) c2.correct_ids.insert(id); else c2.wrong_answers[id] = p2[i];
    }
    int right1 = 0, both_right = 0, wrong1 = 0, same_wrong = 0;
    for (int i = 0; i < n; ++i) {
      right1 += p1[i] == gold[i];
      both_right += p1[i] == gold[i] && p2[i] == gold[i];
      wrong1 += p1[i] != gold[i];
      same_wrong += p1[i] != gold[i] && p2[i] == p1[i];
    }
    const double tp = positive_transfer(c1, c2), tn = negative_transfer(c1, c2);
    if (right1 == 0) EXPECT_TRUE(std::isnan(tp)); else EXPECT_NEAR(tp, double(both_right) / right1, 1e-12);
    if (wrong1 == 0) EXPECT_TRUE(std::isnan(tn)); else EXPECT_NEAR(tn, double(same_wrong) / wrong1, 1e-12);
    if (!std::isnan(tp)) EXPECT_TRUE(tp >= 0 && tp <= 1);
    if (!std::isnan(tn)) EXPECT_TRUE(tn >= 0 && tn <= 1);
  }
}

namespace {

LanguageEvaluation eval_of(const std::string& lang, const std::vector<std::vector<double>>& probs,
                           const std::vector<int>& gold) {
  std::vector<AnswerDistribution> d;
  for (std::size_t i = 0; i < probs.size(); ++i) d.push_back({"q" + std::to_string(i), probs[i]});
  return make_evaluation(lang, d, gold);
}

}  // namespace

TEST(Expected, TwoLanguagesEqualThePairValue) {
  const auto a = eval_of("a", {{0.6, 0.3, 0.1}, {0.2, 0.5, 0.3}, {0.1, 0.1, 0.8}}, {0, 0, 2});
  const auto b = eval_of("b", {{0.3, 0.6, 0.1}, {0.2, 0.5, 0.3}, {0.1, 0.2, 0.7}}, {0, 0, 2});
  const std::vector<LanguageEvaluation> both{a, b};
  const auto m = pairwise_matrices(both);
  const auto e = expected_metrics(m);
  EXPECT_EQ(e.n_pairs, 2u);
  EXPECT_EQ(e.consistency, m.consistency[0][1]);
  EXPECT_EQ(m.consistency[0][1], m.consistency[1][0]);
  EXPECT_NEAR(e.tr_plus, (m.tr_plus[0][1] + m.tr_plus[1][0]) / 2, 1e-15);
}

TEST(Expected, ThreeLanguagesAverageSixPairs) {
  const auto a = eval_of("a", {{0.6, 0.4}, {0.3, 0.7}, {0.5, 0.5}, {0.2, 0.8}}, {0, 1, 1, 0});
  const auto b = eval_of("b", {{0.4, 0.6}, {0.3, 0.7}, {0.9, 0.1}, {0.2, 0.8}}, {0, 1, 1, 0});
  const auto c = eval_of("c", {{0.7, 0.3}, {0.6, 0.4}, {0.1, 0.9}, {0.6, 0.4}}, {0, 1, 1, 0});
  const std::vector<LanguageEvaluation> all{a, b, c};
  const auto m = pairwise_matrices(all);
  const auto e = expected_metrics(m);
  EXPECT_EQ(e.n_pairs, 6u);
  double s = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) s += m.tr_minus[i][j];
  EXPECT_NEAR(e.tr_minus, s / 6, 1e-15);
}

TEST(Expected, UndefinedPairsExcludedAndCounted) {
  // "a" is always right, so its tr- row is undefined.
  const auto a = eval_of("a", {{0.9, 0.1}, {0.1, 0.9}}, {0, 1});
  const auto b = eval_of("b", {{0.2, 0.8}, {0.1, 0.9}}, {0, 1});
  const std::vector<LanguageEvaluation> both{a, b};
  const auto e = expected_metrics(both);
  EXPECT_EQ(e.excluded_tr_minus, 1u);
  EXPECT_EQ(e.tr_minus, 0.0);
}

TEST(Expected, AllUndefinedIsNumericError) {
  const auto a = eval_of("a", {{0.9, 0.1}, {0.1, 0.9}}, {0, 1});
  const auto b = eval_of("b", {{0.9, 0.1}, {0.1, 0.9}}, {0, 1});
  const std::vector<LanguageEvaluation> both{a, b};
  EXPECT_THROW(expected_metrics(both), NumericError);
  const std::vector<LanguageEvaluation> one{a};
  EXPECT_THROW(expected_metrics(one), DataError);
}

// Property: identical evaluations give every defined pairwise metric 1.
TEST(Expected, IdenticalLanguagesAtCeiling) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.01, 1);
  std::uniform_int_distribution<int> g(0, 3);
  std::vector<std::vector<double>> probs(30);
  std::vector<int> gold(30);
  for (int i = 0; i < 30; ++i) {
    probs[i] = {u(rng), u(rng), u(rng), u(rng)};
    gold[i] = g(rng);
  }
  const std::vector<LanguageEvaluation> all{eval_of("a", probs, gold), eval_of("b", probs, gold),
                                            eval_of("c", probs, gold)};
  const auto e = expected_metrics(all);
  EXPECT_EQ(e.consistency, 1.0);
  EXPECT_EQ(e.tr_plus, 1.0);
  EXPECT_EQ(e.tr_minus, 1.0);
}

TEST(Stats, MeanStddevStderr) {
  const std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
  EXPECT_DOUBLE_EQ(mean(v), 5.0);
  EXPECT_NEAR(sample_stddev(v), std::sqrt(32.0 / 7.0), 1e-15);
  EXPECT_NEAR(standard_error(v), std::sqrt(32.0 / 7.0) / std::sqrt(8.0), 1e-15);
  EXPECT_EQ(sample_stddev(std::vector<double>{3}), 0.0);
}
