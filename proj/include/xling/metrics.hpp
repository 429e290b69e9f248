#pragma once

#include <span>
#include <string>
#include <vector>

#include "xling/mcq.hpp"

namespace xling {

// Ascending average ranks (1-based); ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> values);

// Sample Pearson correlation; NaN when either side has zero variance.
double pearson_r(std::span<const double> x, std::span<const double> y);
// Pearson on average ranks (tie-corrected Spearman); NaN on zero variance.
double spearman(std::span<const double> x, std::span<const double> y);

struct PearsonResult {
  double r = 0.0;
  double p = 0.0;  // two-sided, from the t statistic with n-2 dof
  std::size_t n = 0;
  bool defined() const { return r == r; }
};

// Requires n >= 3. Zero variance yields r = p = NaN.
PearsonResult pearson(std::span<const double> x, std::span<const double> y);
double t_test_p_value(double r, std::size_t n);
// "", "*", "**", "***" at .05 / .01 / .001.
std::string significance_stars(double p);

// Spearman between concatenated rank vectors. NaN when a vector is entirely
// tied. Throws DataError on mismatched item orderings.
double consistency(const RankVector& a, const RankVector& b);

// |F1 & F2| / |F1|; NaN when F1 is empty.
double positive_transfer(const CorrectnessSet& from, const CorrectnessSet& to);
// Items wrong in both with the same predicted index, over |not F1|; NaN when
// the source language is never wrong.
double negative_transfer(const CorrectnessSet& from, const CorrectnessSet& to);

struct PairwiseMatrices {
  std::vector<std::string> languages;
  // [from][to]; consistency is symmetric, transfer is directed.
  std::vector<std::vector<double>> consistency, tr_plus, tr_minus;
};

PairwiseMatrices pairwise_matrices(std::span<const LanguageEvaluation> results);

struct ExpectedMetrics {
  double consistency = 0.0;
  double tr_plus = 0.0;
  double tr_minus = 0.0;
  std::size_t n_pairs = 0;  // ordered pairs l1 != l2
  std::size_t excluded_consistency = 0;
  std::size_t excluded_tr_plus = 0;
  std::size_t excluded_tr_minus = 0;
};

// Means over ordered pairs of distinct languages, skipping undefined values.
// Throws DataError for fewer than 2 languages and NumericError when a metric
// is undefined for every pair.
ExpectedMetrics expected_metrics(const PairwiseMatrices& m);
ExpectedMetrics expected_metrics(std::span<const LanguageEvaluation> results);

double mean(std::span<const double> v);
// Sample standard deviation (n-1); 0 for a single value.
double sample_stddev(std::span<const double> v);
double standard_error(std::span<const double> v);

}  // namespace xling
