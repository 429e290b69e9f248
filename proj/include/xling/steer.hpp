#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xling/mcq.hpp"
#include "xling/tensor.hpp"
#include "xling/toy_model.hpp"

namespace xling {

// Mean over parallel pairs of h(pivot prompt) - h(target prompt) at one layer,
// last prompt token. Kept in double; stored on disk as float32.
struct SteeringVector {
  std::string from_language;
  std::string to_language;
  int layer = 0;
  std::vector<double> vector;
  std::size_t n_pairs = 0;
  std::string dataset;
  std::uint64_t seed = 0;

  void validate() const;
  double norm() const;
};

// `path` gets the .xlt payload; the metadata goes to the same stem with ".json".
void save_steering(const SteeringVector& sv, const std::filesystem::path& path);
SteeringVector load_steering(const std::filesystem::path& path);

SteeringVector extract_steering(const Model& model, const McqDataset& pivot, const McqDataset& target,
                                const PromptTemplate& tmpl, int layer);

// From exported states: row i of each [n x d] tensor belongs to ids[i]. Ids
// must match pairwise.
SteeringVector extract_steering(const TensorF32& pivot_states, std::span<const std::string> pivot_ids,
                                const TensorF32& target_states, std::span<const std::string> target_ids,
                                int layer);

struct SteerConfig {
  double gamma = 1.0;
  int layer = 0;
};

// Adds gamma * v at (layer, last prompt token); no injection at all when gamma is 0.
std::vector<Injection> steering_injections(const SteeringVector& sv, const SteerConfig& cfg);

struct SteerMetrics {
  std::string language;
  int layer = 0;
  double gamma = 0.0;
  double accuracy = 0.0;
  double consistency_pivot = 0.0;
  double tr_plus_from_pivot = 0.0;
  LanguageEvaluation evaluation;
};

// Evaluates the target dataset under steering and compares it with the
// (unsteered) pivot evaluation.
SteerMetrics apply_and_eval(const Model& model, const LanguageEvaluation& pivot, const McqDataset& target,
                            const SteeringVector& sv, const SteerConfig& cfg, const PromptTemplate& tmpl);

struct SweepPoint {
  std::string axis;  // "gamma", or "layer:gamma=<g>" for layer sweeps
  double value = 0.0;
  std::string language;
  double accuracy = 0.0;
  double consistency_pivot = 0.0;
  double tr_plus_from_pivot = 0.0;
};

struct SweepResult {
  std::vector<SweepPoint> points;
};

std::vector<double> default_gamma_grid();  // -4, -3, ..., 4

// Gammas must be non-empty and strictly increasing.
SweepResult gamma_sweep(const Model& model, const LanguageEvaluation& pivot, const McqDataset& target,
                        const SteeringVector& sv, std::span<const double> gammas, const PromptTemplate& tmpl);

// For each layer: extract from the sample split, then evaluate at gamma_pos and gamma_neg.
SweepResult layer_sweep_steering(const Model& model, const LanguageEvaluation& pivot, const McqDataset& target,
                                 const McqDataset& sample_pivot, const McqDataset& sample_target,
                                 std::span<const int> layers, double gamma_pos, double gamma_neg,
                                 const PromptTemplate& tmpl);

}  // namespace xling
