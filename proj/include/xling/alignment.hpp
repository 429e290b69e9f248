#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "xling/linalg.hpp"
#include "xling/manifest.hpp"

namespace xling {

// Monolingual baselines with |value| below this make the normalized cosine
// unreliable.
inline constexpr double kEpsilonBaseline = 1e-3;

// Last-prompt-token states of n parallel queries for one (language, layer).
struct RepresentationMatrix {
  std::string language;
  int layer = 0;
  Matrix values;  // n x d
};

// Throws DataError for n < 2 or an all-zero row.
RepresentationMatrix make_representation(std::string language, int layer, Matrix values);

// tr(X'Y Y'X) / (||XX'||_F ||YY'||_F) on column-centered X and Y (or on the raw
// matrices when centered = false). NaN when either matrix has no signal.
double linear_cka(const Matrix& x, const Matrix& y, bool centered = true);

// Mean over rows of cos(x_i, y_i). Throws DataError naming a zero-norm row.
double cosine_pair(const Matrix& x, const Matrix& y);
// Mean cosine over all ordered pairs (i, j), i != j.
double cosine_mono(const Matrix& x);

struct NormalizedCosine {
  double value = 0.0;
  double pair = 0.0;
  double mono_x = 0.0;
  double mono_y = 0.0;
  bool reliable = true;  // both baselines at least kEpsilonBaseline in magnitude
};

// Harmonic mean of pair/mono_x and pair/mono_y.
NormalizedCosine cosine_norm(const Matrix& x, const Matrix& y);

struct PcaResult {
  Matrix coordinates;               // n x k
  std::vector<double> eigenvalues;  // k, non-increasing, sample variances (n-1)
  Matrix components;                // k x d, unit rows
  std::vector<double> mean;         // d
};

// Projects centered data onto its top-k principal directions. Each
// component's largest-magnitude loading is made positive. Throws DataError
// unless 1 <= k <= min(rows - 1, cols).
PcaResult pca_project(const Matrix& stacked, std::size_t k);

enum class SimilarityMetric { cka, cka_uncentered, cosine, cosine_norm };

std::string to_string(SimilarityMetric m);
SimilarityMetric parse_similarity_metric(const std::string& s);

struct SimilarityCell {
  int layer = 0;
  std::string l1, l2;
  double value = 0.0;
  std::string flag;  // "", "unreliable", or "undefined"
};

struct CurvePoint {
  int layer = 0;
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t n_pairs = 0;
};

struct LayerSimilarityCurve {
  SimilarityMetric metric = SimilarityMetric::cka;
  std::vector<std::string> languages;
  std::vector<int> layers;
  // layer -> L x L symmetric matrix; the diagonal is 1 by convention.
  std::map<int, std::vector<std::vector<double>>> matrices;
  std::vector<SimilarityCell> cells;  // unordered pairs l1 before l2
  std::vector<CurvePoint> curve;      // flagged cells excluded

  // Mean over layers of each language's mean similarity to its partners.
  std::map<std::string, double> per_language_mean() const;
};

// In-memory inputs for layer_sweep: one matrix per (language, layer).
struct RepresentationSet {
  std::vector<std::string> languages;
  std::vector<int> layers;
  std::map<std::pair<std::string, int>, Matrix> states;
};

RepresentationSet load_representations(const ExperimentManifest& m);

LayerSimilarityCurve layer_sweep(const RepresentationSet& reps, SimilarityMetric metric);
// Validates the manifest first and throws DataError listing every violation.
LayerSimilarityCurve layer_sweep(const ExperimentManifest& m, SimilarityMetric metric);

}  // namespace xling
