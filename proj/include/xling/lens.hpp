#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "xling/bundle.hpp"
#include "xling/mcq.hpp"
#include "xling/toy_model.hpp"

namespace xling {

struct LensDistribution {
  int layer = 0;
  int position = 0;
  std::vector<double> probs;  // over the vocabulary
};

// softmax(U * final_norm(h)). Throws DataError when h does not have d_model entries.
LensDistribution lens_distribution(std::span<const float> h, const ModelBundle& bundle, int layer = 0,
                                   int position = 0);

// exp(mean(log p)). 0 when any p is 0; throws DataError on an empty span.
double geometric_mean(std::span<const double> probs);

// Scores a phrase from hidden states read off a model run on [prompt; phrase]:
// states[k] is the state at the position just before phrase[k].
double phrase_score(const ModelBundle& bundle, std::span<const std::vector<float>> states,
                    std::span<const TokenId> phrase);

// Geometric mean of lens probabilities of each phrase token, read at `layer`
// from the position before it, in one forward pass over [prompt; phrase].
double latent_seq_prob(const Model& model, const TokenSequence& prompt, const TokenSequence& phrase, int layer,
                       std::span<const Injection> injections = {});
// The same for several layers from a single pass.
std::map<int, double> latent_seq_probs(const Model& model, const TokenSequence& prompt, const TokenSequence& phrase,
                                       std::span<const int> layers, std::span<const Injection> injections = {});

enum class ChoiceText { native, pivot };

std::string to_string(ChoiceText t);

struct LatentChoiceScore {
  std::string language;  // language of the prompt
  std::string item_id;
  int layer = 0;
  ChoiceText text = ChoiceText::native;
  std::vector<double> scores;  // one per choice
};

// Prompts with the native item and scores both its own choice texts and the
// pivot's parallel choice texts at every layer. Records are ordered by layer,
// native before pivot.
std::vector<LatentChoiceScore> latent_choice_scores(const Model& model, const std::string& language,
                                                    const McqItem& item,
                                                    const std::vector<std::vector<std::string>>& pivot_choices,
                                                    const PromptTemplate& tmpl, std::span<const int> layers);

// Runs latent_choice_scores over parallel datasets, in item order.
std::vector<LatentChoiceScore> latent_dataset_scores(const Model& model, const McqDataset& native,
                                                     const McqDataset& pivot, const PromptTemplate& tmpl,
                                                     std::span<const int> layers);

struct LatentCurvePoint {
  int layer = 0;
  double mean = 0.0;
  double stderr_ = 0.0;  // across languages
  std::size_t n_languages = 0;
};

struct LatentCurve {
  std::string kind;
  std::vector<LatentCurvePoint> points;  // ascending layers
  // layer -> language -> mean over that language's items
  std::map<int, std::map<std::string, double>> per_language;
  double chance = 0.0;  // accuracy curves only
  std::size_t excluded = 0;
  std::vector<std::string> diagnostics;
};

// Per item and layer, log(sum native) - log(sum pivot); or, with per_choice,
// the mean over choices of log(native_j) - log(pivot_j). Averaged over items
// per language, then over languages with equal weight. Items with zero pivot
// (or native) mass are excluded with a diagnostic.
LatentCurve log_ratio_curve(std::span<const LatentChoiceScore> scores, bool per_choice = false);

// Fraction of items whose highest latent score (ties to the lowest index) is
// the gold choice, per layer, for one choice text. `gold` maps item id to index.
LatentCurve latent_accuracy_curve(std::span<const LatentChoiceScore> scores, const std::map<std::string, int>& gold,
                                  ChoiceText text);

}  // namespace xling
