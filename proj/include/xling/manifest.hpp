#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xling/tensor.hpp"

namespace xling {

// Describes a set of exported last-token hidden states, one [n_examples x
// d_model] tensor per (language, layer). Relative paths are resolved against
// base_dir (the directory holding manifest.json).
struct ExperimentManifest {
  std::vector<std::string> languages;
  std::vector<int> layer_indices;
  int n_examples = 0;
  int d_model = 0;
  std::map<std::pair<std::string, int>, std::filesystem::path> tensor_paths;
  std::filesystem::path dataset_path;
  std::optional<std::filesystem::path> model_bundle_path;
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::filesystem::path& p) const;
  std::filesystem::path tensor_path(const std::string& language, int layer) const;
};

ExperimentManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const ExperimentManifest& m, const std::filesystem::path& path);

// Every violated invariant, in a stable order. Empty iff the manifest is
// complete and every referenced tensor exists with shape [n_examples x d_model].
std::vector<std::string> validate_manifest(const ExperimentManifest& m);

// Loads one representation tensor and checks its shape against the manifest.
TensorF32 load_states(const ExperimentManifest& m, const std::string& language, int layer);

}  // namespace xling
