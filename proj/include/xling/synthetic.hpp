#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xling/mcq.hpp"
#include "xling/toy_model.hpp"

namespace xling {

// A synthetic language is a relabeling of the base language's content tokens.
// Its new embedding (and, if untied, unembedding) rows are the base rows plus
// independent N(0, sigma^2) noise.
struct SyntheticLanguageSpec {
  std::string code;
  double embedding_noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

// Bijection from base content token ids to this language's token ids.
struct Lexicon {
  std::string code;
  std::map<TokenId, TokenId> relabel_map;

  bool is_bijection() const;
};

// Returns the model with the vocabulary extended by "<code>:<base token>" for
// every content token, and the lexicon. Throws DataError on a token collision.
std::pair<Model, Lexicon> make_language(const Model& model, std::span<const TokenId> content_ids,
                                        const SyntheticLanguageSpec& spec);

struct CorpusShape {
  int question_length = 4;
  int choice_length = 2;
};

// A toy model whose base vocabulary is the prompt template's tokens followed
// by n_content_words content words, extended with every synthetic language.
struct WorldConfig {
  ToyConfig model;  // vocab_size is derived
  int n_content_words = 48;
  std::string pivot = "en";
  std::vector<SyntheticLanguageSpec> languages;
  CorpusShape shape;
};

struct SyntheticWorld {
  Model model;
  PromptTemplate tmpl;
  std::string pivot;
  std::vector<TokenId> content_ids;
  std::vector<Lexicon> lexicons;  // non-pivot languages, in config order
  CorpusShape shape;

  // Pivot first, then the synthetic languages.
  std::vector<std::string> languages() const;
  // Maps a base-language token to its form in `language`; template tokens are shared.
  std::string translate(const std::string& base_token, const std::string& language) const;
  McqItem translate(const McqItem& base, const std::string& language) const;
};

SyntheticWorld build_world(const WorldConfig& config);

// Parallel MCQ datasets, one per language (pivot first), with identical ids
// and gold indices. Each question holds question_length distinct content
// words; the gold choice is the one whose first word is the question's last
// word. Throws DataError for J < 2, I < 1, or an item too long for the model.
std::vector<McqDataset> build_parallel_corpus(const SyntheticWorld& world, int n_questions, int n_choices,
                                              std::uint64_t seed, const std::string& id_prefix = "q");

// Rewrites every dataset's gold index to the pivot evaluation's prediction, so
// the pivot language is answered perfectly by construction.
void bias_gold_to_predictions(std::vector<McqDataset>& datasets, const LanguageEvaluation& pivot);

}  // namespace xling
