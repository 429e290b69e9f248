#include "xling/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include <json.hpp>

#include "xling/error.hpp"

namespace xling {

using nlohmann::json;

std::filesystem::path ExperimentManifest::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : base_dir / p;
}

std::filesystem::path ExperimentManifest::tensor_path(const std::string& language, int layer) const {
  auto it = tensor_paths.find({language, layer});
  if (it == tensor_paths.end()) {
    throw DataError("manifest has no tensor for (" + language + ", layer " + std::to_string(layer) + ")");
  }
  return resolve(it->second);
}

ExperimentManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  ExperimentManifest m;
  m.base_dir = path.parent_path();
  try {
    const json doc = json::parse(in);
    m.languages = doc.at("languages").get<std::vector<std::string>>();
    m.layer_indices = doc.at("layer_indices").get<std::vector<int>>();
    m.n_examples = doc.at("n_examples").get<int>();
    m.d_model = doc.at("d_model").get<int>();
    m.dataset_path = doc.at("dataset_path").get<std::string>();
    if (doc.contains("model_bundle_path") && !doc["model_bundle_path"].is_null()) {
      m.model_bundle_path = doc["model_bundle_path"].get<std::string>();
    }
    for (const auto& [lang, layers] : doc.at("tensor_paths").items()) {
      for (const auto& [layer, p] : layers.items()) {
        m.tensor_paths[{lang, std::stoi(layer)}] = p.get<std::string>();
      }
    }
  } catch (const json::exception& e) {
    throw DataError("malformed manifest " + path.string() + ": " + e.what());
  } catch (const std::invalid_argument&) {
    throw DataError("malformed manifest " + path.string() + ": non-integer layer key");
  }
  return m;
}

void save_manifest(const ExperimentManifest& m, const std::filesystem::path& path) {
  json doc;
  doc["languages"] = m.languages;
  doc["layer_indices"] = m.layer_indices;
  doc["n_examples"] = m.n_examples;
  doc["d_model"] = m.d_model;
  doc["dataset_path"] = m.dataset_path.generic_string();
  doc["model_bundle_path"] =
      m.model_bundle_path ? json(m.model_bundle_path->generic_string()) : json(nullptr);
  json paths = json::object();
  for (const auto& [key, p] : m.tensor_paths) {
    paths[key.first][std::to_string(key.second)] = p.generic_string();
  }
  doc["tensor_paths"] = paths;
  std::ofstream out(path);
  if (!out) throw DataError("cannot write manifest " + path.string());
  out << doc.dump(2) << '\n';
}

std::vector<std::string> validate_manifest(const ExperimentManifest& m) {
  std::vector<std::string> violations;
  if (m.languages.empty()) violations.push_back("languages is empty");
  if (m.layer_indices.empty()) violations.push_back("layer_indices is empty");
  if (m.n_examples <= 0) violations.push_back("n_examples must be positive");
  if (m.d_model <= 0) violations.push_back("d_model must be positive");
  if (!std::is_sorted(m.layer_indices.begin(), m.layer_indices.end()) ||
      std::adjacent_find(m.layer_indices.begin(), m.layer_indices.end()) != m.layer_indices.end()) {
    violations.push_back("layer_indices must be strictly increasing");
  }
  std::set<std::string> seen;
  for (const auto& lang : m.languages) {
    if (!seen.insert(lang).second) violations.push_back("duplicate language " + lang);
  }

  for (const auto& lang : m.languages) {
    for (int layer : m.layer_indices) {
      const std::string where = "(" + lang + ", layer " + std::to_string(layer) + ")";
      auto it = m.tensor_paths.find({lang, layer});
      if (it == m.tensor_paths.end()) {
        violations.push_back("missing tensor path for " + where);
        continue;
      }
      const auto file = m.resolve(it->second);
      if (!std::filesystem::exists(file)) {
        violations.push_back("tensor file for " + where + " does not exist: " + file.string());
        continue;
      }
      try {
        const TensorF32 t = load_tensor(file);
        const bool ok = t.rank() == 2 && m.n_examples > 0 && m.d_model > 0 &&
                        t.dims()[0] == static_cast<std::uint32_t>(m.n_examples) &&
                        t.dims()[1] == static_cast<std::uint32_t>(m.d_model);
        if (!ok) {
          std::string shape;
          for (auto d : t.dims()) shape += (shape.empty() ? "" : "x") + std::to_string(d);
          violations.push_back("shape mismatch for " + where + ": got [" + shape + "], expected [" +
                               std::to_string(m.n_examples) + "x" + std::to_string(m.d_model) + "]");
        }
      } catch (const DataError& e) {
        violations.push_back("unreadable tensor for " + where + ": " + e.what());
      }
    }
  }

  const std::set<std::string> langs(m.languages.begin(), m.languages.end());
  const std::set<int> layers(m.layer_indices.begin(), m.layer_indices.end());
  for (const auto& [key, p] : m.tensor_paths) {
    if (!langs.count(key.first) || !layers.count(key.second)) {
      violations.push_back("unexpected tensor entry (" + key.first + ", layer " +
                           std::to_string(key.second) + ")");
    }
  }
  if (m.model_bundle_path && !std::filesystem::exists(m.resolve(*m.model_bundle_path))) {
    violations.push_back("model bundle does not exist: " + m.resolve(*m.model_bundle_path).string());
  }
  return violations;
}

TensorF32 load_states(const ExperimentManifest& m, const std::string& language, int layer) {
  TensorF32 t = load_tensor(m.tensor_path(language, layer));
  if (t.rank() != 2 || t.dims()[0] != static_cast<std::uint32_t>(m.n_examples) ||
      t.dims()[1] != static_cast<std::uint32_t>(m.d_model)) {
    throw DataError("shape mismatch for (" + language + ", layer " + std::to_string(layer) + ")");
  }
  return t;
}

}  // namespace xling
