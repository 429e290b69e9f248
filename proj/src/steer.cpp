#include "xling/steer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <json.hpp>

#include "xling/error.hpp"
#include "xling/metrics.hpp"
#include "xling/parallel.hpp"

namespace xling {

namespace {

std::filesystem::path sidecar(const std::filesystem::path& p) {
  auto s = p;
  return s.replace_extension(".json");
}

std::string format_gamma(double g) {
  std::ostringstream os;
  os << g;
  return os.str();
}

void check_layer(const Model& model, int layer) {
  if (layer < 0 || layer > model.n_layers()) {
    throw DataError("steering layer " + std::to_string(layer) + " outside [0, " + std::to_string(model.n_layers()) +
                    "]");
  }
}

}  // namespace

void SteeringVector::validate() const {
  if (vector.empty()) throw DataError("steering vector is empty");
  if (n_pairs < 1) throw DataError("steering vector needs n_pairs >= 1");
  if (layer < 0) throw DataError("steering layer must be non-negative");
}

double SteeringVector::norm() const {
  double s = 0.0;
  for (double v : vector) s += v * v;
  return std::sqrt(s);
}

void save_steering(const SteeringVector& sv, const std::filesystem::path& path) {
  sv.validate();
  const auto d = static_cast<std::uint32_t>(sv.vector.size());
  save_tensor(TensorF32({d}, std::vector<float>(sv.vector.begin(), sv.vector.end())), path);
  nlohmann::ordered_json j;
  j["from"] = sv.from_language;
  j["to"] = sv.to_language;
  j["layer"] = sv.layer;
  j["n_pairs"] = sv.n_pairs;
  j["dataset"] = sv.dataset;
  j["seed"] = sv.seed;
  j["tensor"] = path.filename().string();
  std::ofstream out(sidecar(path));
  if (!out) throw DataError("cannot write " + sidecar(path).string());
  out << j.dump(2) << "\n";
}

SteeringVector load_steering(const std::filesystem::path& path) {
  const TensorF32 t = load_tensor(path);
  if (t.rank() != 1) throw DataError(path.string() + ": steering vector must be rank 1");
  std::ifstream in(sidecar(path));
  if (!in) throw DataError("missing steering sidecar " + sidecar(path).string());
  nlohmann::json j;
  try {
    in >> j;
    SteeringVector sv;
    sv.from_language = j.at("from").get<std::string>();
    sv.to_language = j.at("to").get<std::string>();
    sv.layer = j.at("layer").get<int>();
    sv.n_pairs = j.at("n_pairs").get<std::size_t>();
    sv.dataset = j.value("dataset", "");
    sv.seed = j.value("seed", std::uint64_t{0});
    sv.vector.assign(t.data().begin(), t.data().end());
    sv.validate();
    return sv;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(sidecar(path).string() + ": " + e.what());
  }
}

SteeringVector extract_steering(const Model& model, const McqDataset& pivot, const McqDataset& target,
                                const PromptTemplate& tmpl, int layer) {
  check_layer(model, layer);
  if (pivot.items.empty()) throw DataError("steering extraction needs at least one pair");
  if (pivot.items.size() != target.items.size()) throw DataError("steering pairs differ in count");
  for (std::size_t i = 0; i < pivot.items.size(); ++i) {
    if (pivot.items[i].id != target.items[i].id) {
      throw DataError("steering pair " + std::to_string(i) + " has mismatched ids " + pivot.items[i].id + " / " +
                      target.items[i].id);
    }
  }

  const std::size_t n = pivot.items.size();
  const auto d = static_cast<std::size_t>(model.d_model());
  const auto max_len = static_cast<std::size_t>(model.config.max_seq_len);
  CaptureRequest req;
  req.layers = {layer};
  req.logits = Positions::last;

  std::vector<std::vector<double>> diffs(n);
  parallel_for(n, [&](std::size_t i) {
    const auto hp = forward(model, build_prompt(pivot.items[i], tmpl, model.vocab, max_len).tokens, req);
    const auto hm = forward(model, build_prompt(target.items[i], tmpl, model.vocab, max_len).tokens, req);
    const auto& a = hp.last_state(layer);
    const auto& b = hm.last_state(layer);
    diffs[i].resize(d);
    for (std::size_t k = 0; k < d; ++k) diffs[i][k] = static_cast<double>(a[k]) - static_cast<double>(b[k]);
  });

  SteeringVector sv;
  sv.from_language = target.language;
  sv.to_language = pivot.language;
  sv.layer = layer;
  sv.n_pairs = n;
  sv.vector.assign(d, 0.0);
  for (const auto& diff : diffs) {
    for (std::size_t k = 0; k < d; ++k) sv.vector[k] += diff[k];
  }
  for (double& v : sv.vector) v /= static_cast<double>(n);
  return sv;
}

SteeringVector extract_steering(const TensorF32& pivot_states, std::span<const std::string> pivot_ids,
                                const TensorF32& target_states, std::span<const std::string> target_ids,
                                int layer) {
  if (pivot_states.rank() != 2 || target_states.rank() != 2) throw DataError("states must be [n x d] tensors");
  if (pivot_ids.size() != pivot_states.rows() || target_ids.size() != target_states.rows()) {
    throw DataError("one id per state row is required");
  }
  if (pivot_ids.empty()) throw DataError("steering extraction needs at least one pair");
  if (pivot_ids.size() != target_ids.size()) throw DataError("steering pairs differ in count");
  if (pivot_states.cols() != target_states.cols()) throw DataError("state widths differ");
  for (std::size_t i = 0; i < pivot_ids.size(); ++i) {
    if (pivot_ids[i] != target_ids[i]) {
      throw DataError("steering pair " + std::to_string(i) + " has mismatched ids " + pivot_ids[i] + " / " +
                      target_ids[i]);
    }
  }
  const std::size_t n = pivot_ids.size();
  const std::size_t d = pivot_states.cols();
  SteeringVector sv;
  sv.layer = layer;
  sv.n_pairs = n;
  sv.vector.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto a = pivot_states.row(i);
    const auto b = target_states.row(i);
    for (std::size_t k = 0; k < d; ++k) sv.vector[k] += static_cast<double>(a[k]) - static_cast<double>(b[k]);
  }
  for (double& v : sv.vector) v /= static_cast<double>(n);
  return sv;
}

std::vector<Injection> steering_injections(const SteeringVector& sv, const SteerConfig& cfg) {
  if (sv.layer != cfg.layer) {
    throw DataError("steering vector was extracted at layer " + std::to_string(sv.layer) + " but is applied at " +
                    std::to_string(cfg.layer));
  }
  if (cfg.gamma == 0.0) return {};
  return {Injection{cfg.layer, sv.vector, cfg.gamma, -1}};
}

SteerMetrics apply_and_eval(const Model& model, const LanguageEvaluation& pivot, const McqDataset& target,
                            const SteeringVector& sv, const SteerConfig& cfg, const PromptTemplate& tmpl) {
  check_layer(model, cfg.layer);
  const auto injections = steering_injections(sv, cfg);
  SteerMetrics m;
  m.language = target.language;
  m.layer = cfg.layer;
  m.gamma = cfg.gamma;
  m.evaluation = evaluate_dataset(model, target, tmpl, injections);
  m.accuracy = m.evaluation.accuracy();
  m.consistency_pivot = consistency(pivot.rank_vector(), m.evaluation.rank_vector());
  m.tr_plus_from_pivot = positive_transfer(pivot.correctness(), m.evaluation.correctness());
  return m;
}

std::vector<double> default_gamma_grid() {
  std::vector<double> g;
  for (int i = -4; i <= 4; ++i) g.push_back(i);
  return g;
}

SweepResult gamma_sweep(const Model& model, const LanguageEvaluation& pivot, const McqDataset& target,
                        const SteeringVector& sv, std::span<const double> gammas, const PromptTemplate& tmpl) {
  if (gammas.empty()) throw DataError("gamma sweep needs at least one gamma");
  for (std::size_t i = 1; i < gammas.size(); ++i) {
    if (!(gammas[i] > gammas[i - 1])) throw DataError("gamma values must be strictly increasing");
  }
  SweepResult res;
  for (double g : gammas) {
    const auto m = apply_and_eval(model, pivot, target, sv, {g, sv.layer}, tmpl);
    res.points.push_back({"gamma", g, target.language, m.accuracy, m.consistency_pivot, m.tr_plus_from_pivot});
  }
  return res;
}

SweepResult layer_sweep_steering(const Model& model, const LanguageEvaluation& pivot, const McqDataset& target,
                                 const McqDataset& sample_pivot, const McqDataset& sample_target,
                                 std::span<const int> layers, double gamma_pos, double gamma_neg,
                                 const PromptTemplate& tmpl) {
  if (layers.empty()) throw DataError("layer sweep needs at least one layer");
  for (std::size_t i = 1; i < layers.size(); ++i) {
    if (layers[i] <= layers[i - 1]) throw DataError("layers must be strictly increasing");
  }
  for (int l : layers) check_layer(model, l);
  SweepResult res;
  for (int layer : layers) {
    const auto sv = extract_steering(model, sample_pivot, sample_target, tmpl, layer);
    for (double g : {gamma_pos, gamma_neg}) {
      const auto m = apply_and_eval(model, pivot, target, sv, {g, layer}, tmpl);
      res.points.push_back({"layer:gamma=" + format_gamma(g), static_cast<double>(layer), target.language, m.accuracy,
                            m.consistency_pivot, m.tr_plus_from_pivot});
    }
  }
  return res;
}

}  // namespace xling
