#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "xling/toy_model.hpp"
#include "xling/vocab.hpp"

namespace xling {

struct McqItem {
  std::string id;
  std::vector<std::string> question;
  std::vector<std::vector<std::string>> choices;
  int gold = 0;

  // J >= 2, gold in range, no empty choice.
  void validate() const;
};

struct McqDataset {
  std::string language;
  std::vector<McqItem> items;
};

// One JSON object per line: {"id", "question", "choices", "gold"}.
void save_dataset(const McqDataset& ds, const std::filesystem::path& path);
McqDataset load_dataset(const std::filesystem::path& path, const std::string& language);

// Same ids in the same order with the same gold indices and choice counts.
void check_parallel(const McqDataset& a, const McqDataset& b);

// Letter-constrained prompt, rendered as
//   <preamble> Question : <question> A : <choice> B : <choice> ... Answer :
struct PromptTemplate {
  std::vector<std::string> preamble;
  std::string question_label = "Question";
  std::string separator = ":";
  std::vector<std::string> letters;
  std::string answer_label = "Answer";

  static PromptTemplate standard();
  void validate() const;
  // Every token the template itself contributes, in first-use order.
  std::vector<std::string> template_tokens() const;
};

struct Prompt {
  TokenSequence tokens;
  std::vector<TokenId> letter_ids;
};

std::vector<std::string> render_prompt(const McqItem& item, const PromptTemplate& tmpl);
// Throws DataError naming the item when the prompt exceeds max_seq_len.
Prompt build_prompt(const McqItem& item, const PromptTemplate& tmpl, const Vocabulary& vocab,
                    std::size_t max_seq_len);

struct AnswerDistribution {
  std::string item_id;
  std::vector<double> probs;  // over the J letters, sums to 1
};

// Full-vocabulary softmax restricted to the letters and renormalized, which
// reduces to a softmax over the letter logits.
AnswerDistribution letter_distribution(std::string item_id, std::span<const double> vocab_logits,
                                       std::span<const TokenId> letter_ids);
AnswerDistribution answer_distribution(const Model& model, const McqItem& item, const PromptTemplate& tmpl,
                                       std::span<const Injection> injections = {});

// Rank 1 = most probable; exact ties share the average rank.
std::vector<double> rank_answers(const AnswerDistribution& dist);
// Highest probability; ties go to the lowest index.
int predicted_index(const AnswerDistribution& dist);

struct RankVector {
  std::string language;
  std::vector<std::string> item_ids;
  std::vector<double> ranks;  // concatenated per-question blocks
};

struct CorrectnessSet {
  std::string language;
  std::set<std::string> correct_ids;
  std::map<std::string, int> wrong_answers;  // id -> predicted index
};

// The outputs of running one language's dataset through a model.
struct LanguageEvaluation {
  std::string language;
  std::vector<AnswerDistribution> dists;
  std::vector<int> gold;

  RankVector rank_vector() const;
  CorrectnessSet correctness() const;
  double accuracy() const;
};

LanguageEvaluation make_evaluation(std::string language, std::vector<AnswerDistribution> dists,
                                   std::vector<int> gold);

// Scores every item; `injections` are applied to every prompt.
LanguageEvaluation evaluate_dataset(const Model& model, const McqDataset& ds, const PromptTemplate& tmpl,
                                    std::span<const Injection> injections = {});

}  // namespace xling
