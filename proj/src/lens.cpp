#include "xling/lens.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "xling/error.hpp"
#include "xling/metrics.hpp"
#include "xling/parallel.hpp"

namespace xling {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double token_prob(std::span<const double> logits, TokenId token) {
  if (token < 0 || static_cast<std::size_t>(token) >= logits.size()) {
    throw DataError("phrase token id " + std::to_string(token) + " outside the vocabulary");
  }
  return softmax(logits)[static_cast<std::size_t>(token)];
}

void check_layers(const Model& model, std::span<const int> layers) {
  if (layers.empty()) throw DataError("no layers requested");
  for (int l : layers) {
    if (l < 0 || l > model.n_layers()) {
      throw DataError("layer " + std::to_string(l) + " outside the model range [0, " +
                      std::to_string(model.n_layers()) + "]");
    }
  }
}

struct Key {
  std::string language;
  std::string item_id;
  int layer;
  auto operator<=>(const Key&) const = default;
};

LatentCurve aggregate(std::string kind, const std::map<int, std::map<std::string, std::vector<double>>>& values) {
  LatentCurve curve;
  curve.kind = std::move(kind);
  for (const auto& [layer, by_lang] : values) {
    std::vector<double> lang_means;
    for (const auto& [lang, v] : by_lang) {
      if (v.empty()) continue;
      const double m = mean(v);
      curve.per_language[layer][lang] = m;
      lang_means.push_back(m);
    }
    LatentCurvePoint p;
    p.layer = layer;
    p.n_languages = lang_means.size();
    p.mean = lang_means.empty() ? kNaN : mean(lang_means);
    p.stderr_ = lang_means.empty() ? kNaN : standard_error(lang_means);
    curve.points.push_back(p);
  }
  return curve;
}

}  // namespace

LensDistribution lens_distribution(std::span<const float> h, const ModelBundle& bundle, int layer, int position) {
  if (h.size() != bundle.d_model()) {
    throw DataError("hidden state has " + std::to_string(h.size()) + " entries, bundle expects d_model " +
                    std::to_string(bundle.d_model()));
  }
  return {layer, position, softmax(head_logits(h, bundle))};
}

double geometric_mean(std::span<const double> probs) {
  if (probs.empty()) throw DataError("geometric mean of an empty phrase");
  double s = 0.0;
  for (double p : probs) {
    if (p == 0.0) return 0.0;
    s += std::log(p);
  }
  return std::exp(s / static_cast<double>(probs.size()));
}

double phrase_score(const ModelBundle& bundle, std::span<const std::vector<float>> states,
                    std::span<const TokenId> phrase) {
  if (phrase.empty()) throw DataError("empty phrase");
  if (states.size() != phrase.size()) throw DataError("need one hidden state per phrase token");
  std::vector<double> probs;
  for (std::size_t k = 0; k < phrase.size(); ++k) {
    if (states[k].size() != bundle.d_model()) throw DataError("hidden state width does not match the bundle");
    probs.push_back(token_prob(head_logits(states[k], bundle), phrase[k]));
  }
  return geometric_mean(probs);
}

std::map<int, double> latent_seq_probs(const Model& model, const TokenSequence& prompt, const TokenSequence& phrase,
                                       std::span<const int> layers, std::span<const Injection> injections) {
  if (phrase.empty()) throw DataError("empty phrase");
  if (prompt.empty()) throw DataError("empty prompt");
  check_layers(model, layers);
  TokenSequence seq = prompt;
  seq.insert(seq.end(), phrase.begin(), phrase.end());

  CaptureRequest req;
  req.layers.assign(layers.begin(), layers.end());
  req.positions = Positions::all;
  req.logits = Positions::last;
  const CaptureResult run = forward(model, seq, req, injections);

  const auto& cfg = model.config;
  std::map<int, double> out;
  for (int layer : layers) {
    std::vector<double> probs;
    for (std::size_t k = 0; k < phrase.size(); ++k) {
      const int pos = static_cast<int>(prompt.size() + k) - 1;
      const auto logits = head_logits(run.state(layer, pos), model.unembedding(), model.final_norm.data(),
                                      cfg.norm_epsilon);
      probs.push_back(token_prob(logits, phrase[k]));
    }
    out[layer] = geometric_mean(probs);
  }
  return out;
}

double latent_seq_prob(const Model& model, const TokenSequence& prompt, const TokenSequence& phrase, int layer,
                       std::span<const Injection> injections) {
  const int layers[] = {layer};
  return latent_seq_probs(model, prompt, phrase, layers, injections).at(layer);
}

std::string to_string(ChoiceText t) { return t == ChoiceText::native ? "native" : "pivot"; }

std::vector<LatentChoiceScore> latent_choice_scores(const Model& model, const std::string& language,
                                                    const McqItem& item,
                                                    const std::vector<std::vector<std::string>>& pivot_choices,
                                                    const PromptTemplate& tmpl, std::span<const int> layers) {
  if (pivot_choices.size() != item.choices.size()) {
    throw DataError("item " + item.id + ": " + std::to_string(item.choices.size()) + " native choices but " +
                    std::to_string(pivot_choices.size()) + " pivot choices");
  }
  check_layers(model, layers);
  const auto max_len = static_cast<std::size_t>(model.config.max_seq_len);
  const Prompt prompt = build_prompt(item, tmpl, model.vocab, max_len);

  const std::size_t J = item.choices.size();
  std::map<std::pair<ChoiceText, int>, std::vector<double>> table;
  for (ChoiceText text : {ChoiceText::native, ChoiceText::pivot}) {
    const auto& choices = text == ChoiceText::native ? item.choices : pivot_choices;
    for (std::size_t j = 0; j < J; ++j) {
      const TokenSequence phrase = model.vocab.encode(choices[j]);
      if (prompt.tokens.size() + phrase.size() > max_len) {
        throw DataError("item " + item.id + ": prompt plus choice exceeds max_seq_len");
      }
      const auto per_layer = latent_seq_probs(model, prompt.tokens, phrase, layers);
      for (const auto& [layer, score] : per_layer) {
        auto& row = table[{text, layer}];
        row.resize(J);
        row[j] = score;
      }
    }
  }

  std::vector<int> sorted(layers.begin(), layers.end());
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  std::vector<LatentChoiceScore> out;
  for (int layer : sorted) {
    for (ChoiceText text : {ChoiceText::native, ChoiceText::pivot}) {
      out.push_back({language, item.id, layer, text, table.at({text, layer})});
    }
  }
  return out;
}

std::vector<LatentChoiceScore> latent_dataset_scores(const Model& model, const McqDataset& native,
                                                     const McqDataset& pivot, const PromptTemplate& tmpl,
                                                     std::span<const int> layers) {
  check_parallel(native, pivot);
  if (native.items.empty()) throw DataError("dataset " + native.language + " is empty");
  std::vector<std::vector<LatentChoiceScore>> per_item(native.items.size());
  parallel_for(native.items.size(), [&](std::size_t i) {
    per_item[i] = latent_choice_scores(model, native.language, native.items[i], pivot.items[i].choices, tmpl, layers);
  });
  std::vector<LatentChoiceScore> out;
  for (auto& v : per_item) {
    for (auto& s : v) out.push_back(std::move(s));
  }
  return out;
}

LatentCurve log_ratio_curve(std::span<const LatentChoiceScore> scores, bool per_choice) {
  std::map<Key, const LatentChoiceScore*> native, pivot;
  for (const auto& s : scores) {
    auto& slot = s.text == ChoiceText::native ? native : pivot;
    slot[{s.language, s.item_id, s.layer}] = &s;
  }

  std::map<int, std::map<std::string, std::vector<double>>> values;
  std::size_t excluded = 0;
  std::vector<std::string> diagnostics;
  auto exclude = [&](const Key& k, const std::string& why) {
    ++excluded;
    diagnostics.push_back(k.language + "/" + k.item_id + "/layer " + std::to_string(k.layer) + ": " + why);
  };

  for (const auto& [key, nat] : native) {
    auto it = pivot.find(key);
    if (it == pivot.end()) throw DataError("no pivot scores for " + key.language + "/" + key.item_id);
    const auto& a = nat->scores;
    const auto& b = it->second->scores;
    if (a.size() != b.size() || a.empty()) throw DataError("choice count mismatch for " + key.item_id);

    double ratio = 0.0;
    if (per_choice) {
      bool ok = true;
      for (std::size_t j = 0; j < a.size(); ++j) {
        if (!(a[j] > 0.0) || !(b[j] > 0.0)) ok = false;
      }
      if (!ok) {
        exclude(key, "zero choice mass");
        continue;
      }
      for (std::size_t j = 0; j < a.size(); ++j) ratio += std::log(a[j]) - std::log(b[j]);
      ratio /= static_cast<double>(a.size());
    } else {
      double sa = 0.0, sb = 0.0;
      for (std::size_t j = 0; j < a.size(); ++j) {
        sa += a[j];
        sb += b[j];
      }
      if (!(sb > 0.0)) {
        exclude(key, "zero pivot mass");
        continue;
      }
      if (!(sa > 0.0)) {
        exclude(key, "zero native mass");
        continue;
      }
      ratio = std::log(sa) - std::log(sb);
    }
    values[key.layer][key.language].push_back(ratio);
  }
  for (const auto& [key, piv] : pivot) {
    if (!native.count(key)) throw DataError("no native scores for " + key.language + "/" + key.item_id);
  }

  LatentCurve curve = aggregate(per_choice ? "log_ratio_per_choice" : "log_ratio", values);
  curve.excluded = excluded;
  curve.diagnostics = std::move(diagnostics);
  return curve;
}

LatentCurve latent_accuracy_curve(std::span<const LatentChoiceScore> scores, const std::map<std::string, int>& gold,
                                  ChoiceText text) {
  std::map<int, std::map<std::string, std::vector<double>>> values;
  std::set<std::size_t> choice_counts;
  for (const auto& s : scores) {
    if (s.text != text) continue;
    auto g = gold.find(s.item_id);
    if (g == gold.end()) throw DataError("no gold index for item " + s.item_id);
    if (s.scores.empty()) throw DataError("item " + s.item_id + " has no choice scores");
    const auto best = std::max_element(s.scores.begin(), s.scores.end()) - s.scores.begin();
    values[s.layer][s.language].push_back(best == g->second ? 1.0 : 0.0);
    choice_counts.insert(s.scores.size());
  }
  LatentCurve curve = aggregate("accuracy_" + to_string(text), values);
  if (choice_counts.size() == 1) curve.chance = 1.0 / static_cast<double>(*choice_counts.begin());
  else if (!choice_counts.empty()) curve.chance = kNaN;
  return curve;
}

}  // namespace xling
