#include "xling/mcq.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include <json.hpp>

#include "xling/error.hpp"
#include "xling/parallel.hpp"

namespace xling {

using nlohmann::json;

void McqItem::validate() const {
  if (choices.size() < 2) throw DataError("item " + id + ": needs at least 2 choices");
  if (gold < 0 || gold >= static_cast<int>(choices.size())) {
    throw DataError("item " + id + ": gold index " + std::to_string(gold) + " out of range");
  }
  for (const auto& c : choices) {
    if (c.empty()) throw DataError("item " + id + ": empty choice");
  }
}

void save_dataset(const McqDataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& item : ds.items) {
    json j;
    j["id"] = item.id;
    j["question"] = item.question;
    j["choices"] = item.choices;
    j["gold"] = item.gold;
    out << j.dump() << '\n';
  }
}

McqDataset load_dataset(const std::filesystem::path& path, const std::string& language) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset " + path.string());
  McqDataset ds;
  ds.language = language;
  std::string line;
  std::size_t lineno = 0;
  std::unordered_set<std::string> ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    McqItem item;
    try {
      const json j = json::parse(line);
      item.id = j.at("id").get<std::string>();
      item.question = j.at("question").get<std::vector<std::string>>();
      item.choices = j.at("choices").get<std::vector<std::vector<std::string>>>();
      item.gold = j.at("gold").get<int>();
    } catch (const json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    item.validate();
    if (!ids.insert(item.id).second) throw DataError(path.string() + ": duplicate item id " + item.id);
    ds.items.push_back(std::move(item));
  }
  return ds;
}

void check_parallel(const McqDataset& a, const McqDataset& b) {
  if (a.items.size() != b.items.size()) {
    throw DataError("datasets " + a.language + " and " + b.language + " differ in length");
  }
  for (std::size_t i = 0; i < a.items.size(); ++i) {
    const auto& x = a.items[i];
    const auto& y = b.items[i];
    if (x.id != y.id || x.gold != y.gold || x.choices.size() != y.choices.size()) {
      throw DataError("datasets " + a.language + " and " + b.language + " are not parallel at item " + x.id);
    }
  }
}

PromptTemplate PromptTemplate::standard() {
  PromptTemplate t;
  t.preamble = {"Given",  "the",    "following",     "question", "and", "answer",  "choices", ",", "output",
                "the",    "letter", "corresponding", "to",       "the", "correct", "answer",  "."};
  t.letters = {"A", "B", "C", "D", "E", "F", "G", "H", "I", "J"};
  return t;
}

void PromptTemplate::validate() const {
  std::unordered_set<std::string> seen;
  for (const auto& l : letters) {
    if (!seen.insert(l).second) throw DataError("duplicate letter label '" + l + "'");
  }
}

std::vector<std::string> PromptTemplate::template_tokens() const {
  std::vector<std::string> out;
  std::unordered_set<std::string> seen;
  auto add = [&](const std::string& t) {
    if (seen.insert(t).second) out.push_back(t);
  };
  for (const auto& t : preamble) add(t);
  add(question_label);
  add(separator);
  for (const auto& l : letters) add(l);
  add(answer_label);
  return out;
}

std::vector<std::string> render_prompt(const McqItem& item, const PromptTemplate& tmpl) {
  item.validate();
  tmpl.validate();
  if (item.choices.size() > tmpl.letters.size()) {
    throw DataError("item " + item.id + ": " + std::to_string(item.choices.size()) +
                    " choices exceed the template's " + std::to_string(tmpl.letters.size()) + " letters");
  }
  std::vector<std::string> out(tmpl.preamble);
  out.push_back(tmpl.question_label);
  out.push_back(tmpl.separator);
  out.insert(out.end(), item.question.begin(), item.question.end());
  for (std::size_t j = 0; j < item.choices.size(); ++j) {
    out.push_back(tmpl.letters[j]);
    out.push_back(tmpl.separator);
    out.insert(out.end(), item.choices[j].begin(), item.choices[j].end());
  }
  out.push_back(tmpl.answer_label);
  out.push_back(tmpl.separator);
  return out;
}

Prompt build_prompt(const McqItem& item, const PromptTemplate& tmpl, const Vocabulary& vocab,
                    std::size_t max_seq_len) {
  const auto rendered = render_prompt(item, tmpl);
  if (rendered.size() > max_seq_len) {
    throw DataError("item " + item.id + ": prompt of " + std::to_string(rendered.size()) +
                    " tokens exceeds max_seq_len " + std::to_string(max_seq_len));
  }
  Prompt p;
  p.tokens = vocab.encode(rendered);
  for (std::size_t j = 0; j < item.choices.size(); ++j) p.letter_ids.push_back(vocab.id(tmpl.letters[j]));
  return p;
}

AnswerDistribution letter_distribution(std::string item_id, std::span<const double> vocab_logits,
                                       std::span<const TokenId> letter_ids) {
  std::vector<double> picked;
  picked.reserve(letter_ids.size());
  for (TokenId id : letter_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_logits.size()) {
      throw DataError("letter token id " + std::to_string(id) + " out of range");
    }
    picked.push_back(vocab_logits[static_cast<std::size_t>(id)]);
  }
  return {std::move(item_id), softmax(picked)};
}

AnswerDistribution answer_distribution(const Model& model, const McqItem& item, const PromptTemplate& tmpl,
                                       std::span<const Injection> injections) {
  const Prompt p = build_prompt(item, tmpl, model.vocab, static_cast<std::size_t>(model.config.max_seq_len));
  CaptureRequest req;
  req.logits = Positions::last;
  const auto out = forward(model, p.tokens, req, injections);
  return letter_distribution(item.id, out.last_logits(), p.letter_ids);
}

std::vector<double> rank_answers(const AnswerDistribution& dist) {
  const auto& p = dist.probs;
  std::vector<std::size_t> order(p.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] > p[b]; });
  std::vector<double> ranks(p.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && p[order[j + 1]] == p[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

int predicted_index(const AnswerDistribution& dist) {
  const auto& p = dist.probs;
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

RankVector LanguageEvaluation::rank_vector() const {
  RankVector rv;
  rv.language = language;
  for (const auto& d : dists) {
    rv.item_ids.push_back(d.item_id);
    const auto r = rank_answers(d);
    rv.ranks.insert(rv.ranks.end(), r.begin(), r.end());
  }
  return rv;
}

CorrectnessSet LanguageEvaluation::correctness() const {
  CorrectnessSet cs;
  cs.language = language;
  for (std::size_t i = 0; i < dists.size(); ++i) {
    const int pred = predicted_index(dists[i]);
    if (pred == gold[i]) {
      cs.correct_ids.insert(dists[i].item_id);
    } else {
      cs.wrong_answers[dists[i].item_id] = pred;
    }
  }
  return cs;
}

double LanguageEvaluation::accuracy() const {
  if (dists.empty()) throw DataError("accuracy of an empty evaluation");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < dists.size(); ++i) hits += predicted_index(dists[i]) == gold[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(dists.size());
}

LanguageEvaluation make_evaluation(std::string language, std::vector<AnswerDistribution> dists,
                                   std::vector<int> gold) {
  if (dists.size() != gold.size()) throw DataError("distribution and gold counts differ");
  for (std::size_t i = 0; i < dists.size(); ++i) {
    if (gold[i] < 0 || gold[i] >= static_cast<int>(dists[i].probs.size())) {
      throw DataError("gold index out of range for item " + dists[i].item_id);
    }
  }
  return {std::move(language), std::move(dists), std::move(gold)};
}

LanguageEvaluation evaluate_dataset(const Model& model, const McqDataset& ds, const PromptTemplate& tmpl,
                                    std::span<const Injection> injections) {
  if (ds.items.empty()) throw DataError("dataset " + ds.language + " is empty");
  std::vector<AnswerDistribution> dists(ds.items.size());
  parallel_for(ds.items.size(),
               [&](std::size_t i) { dists[i] = answer_distribution(model, ds.items[i], tmpl, injections); });
  std::vector<int> gold;
  gold.reserve(ds.items.size());
  for (const auto& item : ds.items) gold.push_back(item.gold);
  return make_evaluation(ds.language, std::move(dists), std::move(gold));
}

}  // namespace xling
