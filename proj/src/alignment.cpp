#include "xling/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "xling/error.hpp"
#include "xling/metrics.hpp"

namespace xling {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double squared_frobenius(const Matrix& m) {
  double s = 0.0;
  for (double v : m.data()) s += v * v;
  return s;
}

std::vector<double> row_norms(const Matrix& x, const char* which) {
  std::vector<double> norms(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (double v : x.row(i)) s += v * v;
    norms[i] = std::sqrt(s);
    if (norms[i] == 0.0) throw DataError(std::string(which) + " row " + std::to_string(i) + " has zero norm");
  }
  return norms;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

RepresentationMatrix make_representation(std::string language, int layer, Matrix values) {
  if (values.rows() < 2) throw DataError("representation for " + language + " needs at least 2 rows");
  row_norms(values, ("representation " + language).c_str());
  return {std::move(language), layer, std::move(values)};
}

double linear_cka(const Matrix& x, const Matrix& y, bool centered) {
  if (x.rows() != y.rows()) {
    throw DataError("CKA needs the same number of examples: " + std::to_string(x.rows()) + " vs " +
                    std::to_string(y.rows()));
  }
  const Matrix xc = centered ? x.centered_columns() : x;
  const Matrix yc = centered ? y.centered_columns() : y;
  const Matrix xt = xc.transpose();
  const Matrix yt = yc.transpose();
  const double cross = squared_frobenius(xt * yc);
  const double self_x = std::sqrt(squared_frobenius(xt * xc));
  const double self_y = std::sqrt(squared_frobenius(yt * yc));
  if (self_x == 0.0 || self_y == 0.0) return kNaN;
  return cross / (self_x * self_y);
}

double cosine_pair(const Matrix& x, const Matrix& y) {
  if (x.rows() != y.rows() || x.cols() != y.cols()) throw DataError("cosine needs matrices of the same shape");
  if (x.rows() == 0) throw DataError("cosine of empty matrices");
  const auto nx = row_norms(x, "X");
  const auto ny = row_norms(y, "Y");
  double s = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) s += dot(x.row(i), y.row(i)) / (nx[i] * ny[i]);
  return s / static_cast<double>(x.rows());
}

double cosine_mono(const Matrix& x) {
  const std::size_t n = x.rows();
  if (n < 2) throw DataError("monolingual cosine needs at least 2 rows");
  const auto norms = row_norms(x, "X");
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) s += dot(x.row(i), x.row(j)) / (norms[i] * norms[j]);
  }
  // Each unordered pair stands for both orders.
  return 2.0 * s / static_cast<double>(n * (n - 1));
}

NormalizedCosine cosine_norm(const Matrix& x, const Matrix& y) {
  NormalizedCosine r;
  r.pair = cosine_pair(x, y);
  r.mono_x = cosine_mono(x);
  r.mono_y = cosine_mono(y);
  r.reliable = std::abs(r.mono_x) >= kEpsilonBaseline && std::abs(r.mono_y) >= kEpsilonBaseline;
  const double a = r.pair / r.mono_x;
  const double b = r.pair / r.mono_y;
  r.value = (a + b) == 0.0 ? kNaN : 2.0 * a * b / (a + b);
  return r;
}

PcaResult pca_project(const Matrix& stacked, std::size_t k) {
  const std::size_t n = stacked.rows();
  const std::size_t d = stacked.cols();
  if (n < 2 || k < 1 || k > std::min(n - 1, d)) {
    throw DataError("PCA with k = " + std::to_string(k) + " needs 1 <= k <= min(rows - 1, cols) = " +
                    std::to_string(n < 2 ? 0 : std::min(n - 1, d)));
  }
  PcaResult res;
  res.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < d; ++c) res.mean[c] += stacked(i, c);
  for (double& m : res.mean) m /= static_cast<double>(n);

  const Matrix centered = stacked.centered_columns();
  const SvdResult svd = jacobi_svd(centered);
  res.components = Matrix(k, d);
  res.eigenvalues.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    std::size_t arg = 0;
    for (std::size_t c = 1; c < d; ++c) {
      if (std::abs(svd.v(c, j)) > std::abs(svd.v(arg, j))) arg = c;
    }
    const double sign = svd.v(arg, j) < 0.0 ? -1.0 : 1.0;
    for (std::size_t c = 0; c < d; ++c) res.components(j, c) = sign * svd.v(c, j);
    res.eigenvalues[j] = svd.singular_values[j] * svd.singular_values[j] / static_cast<double>(n - 1);
  }
  res.coordinates = centered * res.components.transpose();
  return res;
}

std::string to_string(SimilarityMetric m) {
  switch (m) {
    case SimilarityMetric::cka: return "cka";
    case SimilarityMetric::cka_uncentered: return "cka_uncentered";
    case SimilarityMetric::cosine: return "cosine";
    case SimilarityMetric::cosine_norm: return "cosine_norm";
  }
  return "unknown";
}

SimilarityMetric parse_similarity_metric(const std::string& s) {
  if (s == "cka") return SimilarityMetric::cka;
  if (s == "cka_uncentered") return SimilarityMetric::cka_uncentered;
  if (s == "cosine") return SimilarityMetric::cosine;
  if (s == "cosine_norm") return SimilarityMetric::cosine_norm;
  throw UsageError("unknown similarity metric '" + s + "' (cka, cka_uncentered, cosine, cosine_norm)");
}

std::map<std::string, double> LayerSimilarityCurve::per_language_mean() const {
  std::map<std::string, double> out;
  for (const auto& lang : languages) {
    std::vector<double> per_layer;
    for (int layer : layers) {
      std::vector<double> vals;
      for (const auto& c : cells) {
        if (c.layer == layer && c.flag.empty() && (c.l1 == lang || c.l2 == lang)) vals.push_back(c.value);
      }
      if (!vals.empty()) per_layer.push_back(mean(vals));
    }
    out[lang] = per_layer.empty() ? kNaN : mean(per_layer);
  }
  return out;
}

RepresentationSet load_representations(const ExperimentManifest& m) {
  RepresentationSet set;
  set.languages = m.languages;
  set.layers = m.layer_indices;
  for (const auto& lang : m.languages) {
    for (int layer : m.layer_indices) set.states[{lang, layer}] = Matrix::from_tensor(load_states(m, lang, layer));
  }
  return set;
}

LayerSimilarityCurve layer_sweep(const RepresentationSet& reps, SimilarityMetric metric) {
  LayerSimilarityCurve out;
  out.metric = metric;
  out.languages = reps.languages;
  out.layers = reps.layers;
  const std::size_t L = reps.languages.size();
  if (L < 2) throw DataError("layer sweep needs at least 2 languages");

  auto matrix_for = [&](const std::string& lang, int layer) -> const Matrix& {
    auto it = reps.states.find({lang, layer});
    if (it == reps.states.end()) {
      throw DataError("no representation for (" + lang + ", layer " + std::to_string(layer) + ")");
    }
    return it->second;
  };

  for (int layer : reps.layers) {
    auto& mat = out.matrices[layer];
    mat.assign(L, std::vector<double>(L, 1.0));
    std::vector<double> values;
    for (std::size_t i = 0; i < L; ++i) {
      for (std::size_t j = i + 1; j < L; ++j) {
        const Matrix& x = matrix_for(reps.languages[i], layer);
        const Matrix& y = matrix_for(reps.languages[j], layer);
        SimilarityCell cell{layer, reps.languages[i], reps.languages[j], 0.0, ""};
        switch (metric) {
          case SimilarityMetric::cka: cell.value = linear_cka(x, y, true); break;
          case SimilarityMetric::cka_uncentered: cell.value = linear_cka(x, y, false); break;
          case SimilarityMetric::cosine: cell.value = cosine_pair(x, y); break;
          case SimilarityMetric::cosine_norm: {
            const auto nc = cosine_norm(x, y);
            cell.value = nc.value;
            if (!nc.reliable) cell.flag = "unreliable";
            break;
          }
        }
        if (std::isnan(cell.value)) cell.flag = "undefined";
        mat[i][j] = mat[j][i] = cell.value;
        if (cell.flag.empty()) values.push_back(cell.value);
        out.cells.push_back(std::move(cell));
      }
    }
    CurvePoint p;
    p.layer = layer;
    p.n_pairs = values.size();
    p.mean = values.empty() ? kNaN : mean(values);
    p.stderr_ = values.empty() ? kNaN : standard_error(values);
    out.curve.push_back(p);
  }
  return out;
}

LayerSimilarityCurve layer_sweep(const ExperimentManifest& m, SimilarityMetric metric) {
  const auto violations = validate_manifest(m);
  if (!violations.empty()) {
    std::string msg = "invalid manifest:";
    for (const auto& v : violations) msg += "\n  " + v;
    throw DataError(msg);
  }
  return layer_sweep(load_representations(m), metric);
}

}  // namespace xling
