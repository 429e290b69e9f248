#include "xling/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/special_functions/beta.hpp>

#include "xling/error.hpp"

namespace xling {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require_same_length(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) {
    throw DataError("length mismatch: " + std::to_string(x.size()) + " vs " + std::to_string(y.size()));
  }
}

}  // namespace

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

double pearson_r(std::span<const double> x, std::span<const double> y) {
  require_same_length(x, y);
  const std::size_t n = x.size();
  if (n < 2) return kNaN;
  const double mx = mean(x);
  const double my = mean(y);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return kNaN;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  require_same_length(x, y);
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson_r(rx, ry);
}

double t_test_p_value(double r, std::size_t n) {
  if (!(r == r) || n < 3) return kNaN;
  const double dof = static_cast<double>(n - 2);
  const double r2 = r * r;
  if (r2 >= 1.0) return 0.0;
  const double t2 = r2 * dof / (1.0 - r2);
  // Two-sided Student-t tail: I_{dof/(dof+t^2)}(dof/2, 1/2).
  return boost::math::ibeta(0.5 * dof, 0.5, dof / (dof + t2));
}

PearsonResult pearson(std::span<const double> x, std::span<const double> y) {
  require_same_length(x, y);
  if (x.size() < 3) throw DataError("pearson needs at least 3 points, got " + std::to_string(x.size()));
  PearsonResult res;
  res.n = x.size();
  res.r = pearson_r(x, y);
  res.p = t_test_p_value(res.r, res.n);
  return res;
}

std::string significance_stars(double p) {
  if (!(p == p)) return "";
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

double consistency(const RankVector& a, const RankVector& b) {
  if (a.item_ids != b.item_ids) {
    throw DataError("rank vectors for " + a.language + " and " + b.language + " cover different question orderings");
  }
  if (a.ranks.size() != b.ranks.size()) {
    throw DataError("rank vectors for " + a.language + " and " + b.language + " differ in length");
  }
  return spearman(a.ranks, b.ranks);
}

double positive_transfer(const CorrectnessSet& from, const CorrectnessSet& to) {
  if (from.correct_ids.empty()) return kNaN;
  std::size_t shared = 0;
  for (const auto& id : from.correct_ids) shared += to.correct_ids.count(id);
  return static_cast<double>(shared) / static_cast<double>(from.correct_ids.size());
}

double negative_transfer(const CorrectnessSet& from, const CorrectnessSet& to) {
  if (from.wrong_answers.empty()) return kNaN;
  std::size_t shared = 0;
  for (const auto& [id, pred] : from.wrong_answers) {
    auto it = to.wrong_answers.find(id);
    if (it != to.wrong_answers.end() && it->second == pred) ++shared;
  }
  return static_cast<double>(shared) / static_cast<double>(from.wrong_answers.size());
}

PairwiseMatrices pairwise_matrices(std::span<const LanguageEvaluation> results) {
  const std::size_t n = results.size();
  PairwiseMatrices m;
  std::vector<RankVector> ranks;
  std::vector<CorrectnessSet> sets;
  for (const auto& r : results) {
    m.languages.push_back(r.language);
    ranks.push_back(r.rank_vector());
    sets.push_back(r.correctness());
  }
  m.consistency.assign(n, std::vector<double>(n, kNaN));
  m.tr_plus = m.consistency;
  m.tr_minus = m.consistency;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      m.consistency[i][j] = j < i ? m.consistency[j][i] : consistency(ranks[i], ranks[j]);
      m.tr_plus[i][j] = positive_transfer(sets[i], sets[j]);
      m.tr_minus[i][j] = negative_transfer(sets[i], sets[j]);
    }
  }
  return m;
}

ExpectedMetrics expected_metrics(const PairwiseMatrices& m) {
  const std::size_t n = m.languages.size();
  if (n < 2) throw DataError("expected metrics need at least 2 languages");
  ExpectedMetrics e;
  auto average = [&](const std::vector<std::vector<double>>& mat, std::size_t& excluded, const char* name) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        if (std::isnan(mat[i][j])) {
          ++excluded;
        } else {
          sum += mat[i][j];
          ++count;
        }
      }
    }
    if (count == 0) throw NumericError(std::string(name) + " is undefined for every language pair");
    return sum / static_cast<double>(count);
  };
  e.n_pairs = n * (n - 1);
  e.consistency = average(m.consistency, e.excluded_consistency, "consistency");
  e.tr_plus = average(m.tr_plus, e.excluded_tr_plus, "positive transfer");
  e.tr_minus = average(m.tr_minus, e.excluded_tr_minus, "negative transfer");
  return e;
}

ExpectedMetrics expected_metrics(std::span<const LanguageEvaluation> results) {
  if (results.size() < 2) throw DataError("expected metrics need at least 2 languages");
  return expected_metrics(pairwise_matrices(results));
}

double mean(std::span<const double> v) {
  if (v.empty()) return kNaN;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sample_stddev(std::span<const double> v) {
  if (v.size() < 2) return v.empty() ? kNaN : 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

double standard_error(std::span<const double> v) {
  if (v.empty()) return kNaN;
  return sample_stddev(v) / std::sqrt(static_cast<double>(v.size()));
}

}  // namespace xling
