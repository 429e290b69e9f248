#include "xling/bundle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include <json.hpp>

#include "xling/error.hpp"

namespace xling {

void ModelBundle::validate() const {
  if (unembedding.rank() != 2) throw DataError("unembedding must be rank 2");
  if (final_norm_scale.rank() != 1 || final_norm_scale.size() != unembedding.cols()) {
    throw DataError("final norm scale must have d_model = " + std::to_string(unembedding.cols()) +
                    " entries");
  }
  if (vocab.size() != unembedding.rows()) {
    throw DataError("vocab has " + std::to_string(vocab.size()) + " tokens but unembedding has " +
                    std::to_string(unembedding.rows()) + " rows");
  }
  std::unordered_set<std::string> seen;
  for (const auto& t : vocab) {
    if (!seen.insert(t).second) throw DataError("duplicate token string '" + t + "'");
  }
  if (!(norm_epsilon >= 0.0)) throw DataError("norm epsilon must be non-negative");
}

std::int64_t ModelBundle::token_id(const std::string& token) const {
  auto it = std::find(vocab.begin(), vocab.end(), token);
  return it == vocab.end() ? -1 : static_cast<std::int64_t>(it - vocab.begin());
}

std::vector<double> rms_normalize(std::span<const float> h, std::span<const float> scale, double eps) {
  if (h.size() != scale.size()) {
    throw DataError("hidden size " + std::to_string(h.size()) + " != norm size " +
                    std::to_string(scale.size()));
  }
  double ss = 0.0;
  for (float x : h) ss += static_cast<double>(x) * x;
  const double inv = 1.0 / std::sqrt(ss / static_cast<double>(h.size()) + eps);
  std::vector<double> out(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) out[i] = static_cast<double>(h[i]) * inv * scale[i];
  return out;
}

std::vector<double> head_logits(std::span<const float> h, const TensorF32& unembedding,
                                std::span<const float> norm_scale, double eps) {
  if (h.size() != unembedding.cols()) {
    throw DataError("hidden size " + std::to_string(h.size()) + " != d_model " +
                    std::to_string(unembedding.cols()));
  }
  const auto x = rms_normalize(h, norm_scale, eps);
  const std::size_t vocab = unembedding.rows();
  std::vector<double> logits(vocab);
  for (std::size_t v = 0; v < vocab; ++v) {
    const auto w = unembedding.row(v);
    double acc = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) acc += static_cast<double>(w[i]) * x[i];
    logits[v] = acc;
  }
  return logits;
}

std::vector<double> head_logits(std::span<const float> h, const ModelBundle& bundle) {
  return head_logits(h, bundle.unembedding, bundle.final_norm_scale.data(), bundle.norm_epsilon);
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.begin(), logits.end());
  if (p.empty()) return p;
  const double mx = *std::max_element(p.begin(), p.end());
  double z = 0.0;
  for (double& v : p) {
    v = std::exp(v - mx);
    z += v;
  }
  for (double& v : p) v /= z;
  return p;
}

void save_bundle(const ModelBundle& b, const std::filesystem::path& dir) {
  b.validate();
  std::filesystem::create_directories(dir);
  save_tensor(b.unembedding, dir / "unembedding.xlt");
  save_tensor(b.final_norm_scale, dir / "final_norm.xlt");
  nlohmann::json doc;
  doc["vocab"] = b.vocab;
  doc["norm_epsilon"] = b.norm_epsilon;
  std::ofstream out(dir / "vocab.json");
  if (!out) throw DataError("cannot write " + (dir / "vocab.json").string());
  out << doc.dump(1) << '\n';
}

ModelBundle load_bundle(const std::filesystem::path& dir) {
  ModelBundle b;
  b.unembedding = load_tensor(dir / "unembedding.xlt");
  b.final_norm_scale = load_tensor(dir / "final_norm.xlt");
  std::ifstream in(dir / "vocab.json");
  if (!in) throw DataError("cannot open " + (dir / "vocab.json").string());
  try {
    const auto doc = nlohmann::json::parse(in);
    b.vocab = doc.at("vocab").get<std::vector<std::string>>();
    b.norm_epsilon = doc.value("norm_epsilon", 1e-6);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed vocab.json in " + dir.string() + ": " + e.what());
  }
  b.validate();
  return b;
}

}  // namespace xling
