#include "xling/synthetic.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "xling/error.hpp"
#include "xling/random.hpp"

namespace xling {

namespace {

std::string content_word(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "w%03d", i);
  return buf;
}

std::string item_id(const std::string& prefix, int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", i);
  return prefix + buf;
}

// Appends `rows` as new rows of a [n x d] tensor.
TensorF32 append_rows(const TensorF32& t, const std::vector<std::vector<float>>& rows) {
  const std::size_t d = t.cols();
  std::vector<float> data(t.data().begin(), t.data().end());
  for (const auto& r : rows) data.insert(data.end(), r.begin(), r.end());
  return TensorF32({static_cast<std::uint32_t>(t.rows() + rows.size()), static_cast<std::uint32_t>(d)},
                   std::move(data));
}

std::vector<std::vector<float>> noisy_copies(const TensorF32& table, std::span<const TokenId> ids, double sigma,
                                             std::mt19937_64 rng) {
  std::normal_distribution<double> noise(0.0, sigma > 0.0 ? sigma : 1.0);
  std::vector<std::vector<float>> rows;
  rows.reserve(ids.size());
  for (TokenId id : ids) {
    const auto base = table.row(static_cast<std::size_t>(id));
    std::vector<float> r(base.begin(), base.end());
    if (sigma > 0.0) {
      for (float& v : r) v = static_cast<float>(v + noise(rng));
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace

bool Lexicon::is_bijection() const {
  std::set<TokenId> images;
  for (const auto& [from, to] : relabel_map) images.insert(to);
  return images.size() == relabel_map.size();
}

std::pair<Model, Lexicon> make_language(const Model& model, std::span<const TokenId> content_ids,
                                        const SyntheticLanguageSpec& spec) {
  if (spec.code.empty()) throw DataError("language code must not be empty");
  if (!(spec.embedding_noise_sigma >= 0.0)) throw DataError("language " + spec.code + ": sigma must be >= 0");
  for (TokenId id : content_ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= model.vocab_size()) {
      throw DataError("language " + spec.code + ": content token id out of range");
    }
  }

  Model out = model;
  Lexicon lex;
  lex.code = spec.code;
  for (TokenId id : content_ids) {
    const std::string name = spec.code + ":" + model.vocab.token(id);
    if (out.vocab.contains(name)) throw DataError("token '" + name + "' collides with an existing token");
    lex.relabel_map[id] = out.vocab.add(name);
  }

  const double sigma = spec.embedding_noise_sigma;
  out.token_embedding = append_rows(
      model.token_embedding, noisy_copies(model.token_embedding, content_ids, sigma,
                                          make_stream(spec.seed, "lang_emb:" + spec.code)));
  if (!model.config.tied_embeddings) {
    out.output_embedding = append_rows(
        model.output_embedding, noisy_copies(model.output_embedding, content_ids, sigma,
                                             make_stream(spec.seed, "lang_unemb:" + spec.code)));
  }
  out.config.vocab_size = static_cast<int>(out.vocab.size());
  return {std::move(out), std::move(lex)};
}

std::vector<std::string> SyntheticWorld::languages() const {
  std::vector<std::string> out{pivot};
  for (const auto& l : lexicons) out.push_back(l.code);
  return out;
}

std::string SyntheticWorld::translate(const std::string& base_token, const std::string& language) const {
  if (language == pivot) return base_token;
  for (const auto& lex : lexicons) {
    if (lex.code != language) continue;
    const TokenId id = model.vocab.id(base_token);
    auto it = lex.relabel_map.find(id);
    return it == lex.relabel_map.end() ? base_token : model.vocab.token(it->second);
  }
  throw DataError("unknown language " + language);
}

McqItem SyntheticWorld::translate(const McqItem& base, const std::string& language) const {
  McqItem out = base;
  for (auto& t : out.question) t = translate(t, language);
  for (auto& c : out.choices) {
    for (auto& t : c) t = translate(t, language);
  }
  return out;
}

SyntheticWorld build_world(const WorldConfig& config) {
  if (config.n_content_words < 2) throw DataError("need at least 2 content words");
  SyntheticWorld w;
  w.tmpl = PromptTemplate::standard();
  w.pivot = config.pivot;
  w.shape = config.shape;

  std::vector<std::string> vocab = w.tmpl.template_tokens();
  const auto n_template = static_cast<TokenId>(vocab.size());
  for (int i = 0; i < config.n_content_words; ++i) vocab.push_back(content_word(i));
  for (TokenId id = n_template; id < static_cast<TokenId>(vocab.size()); ++id) w.content_ids.push_back(id);

  ToyConfig cfg = config.model;
  cfg.vocab_size = static_cast<int>(vocab.size());
  w.model = init_model(cfg, std::move(vocab));

  std::set<std::string> codes{config.pivot};
  for (const auto& spec : config.languages) {
    if (!codes.insert(spec.code).second) throw DataError("duplicate language code " + spec.code);
    auto [model, lex] = make_language(w.model, w.content_ids, spec);
    w.model = std::move(model);
    w.lexicons.push_back(std::move(lex));
  }
  return w;
}

std::vector<McqDataset> build_parallel_corpus(const SyntheticWorld& world, int n_questions, int n_choices,
                                              std::uint64_t seed, const std::string& id_prefix) {
  if (n_questions < 1) throw DataError("corpus needs at least one question");
  if (n_choices < 2) throw DataError("corpus needs at least 2 choices per question, got " + std::to_string(n_choices));
  const int n_words = static_cast<int>(world.content_ids.size());
  const auto& shape = world.shape;
  if (shape.question_length < 1 || shape.choice_length < 1) throw DataError("corpus shape lengths must be positive");
  if (shape.question_length > n_words || n_choices > n_words) {
    throw DataError("not enough content words for the corpus shape");
  }

  auto rng = make_stream(seed, "corpus:" + id_prefix);
  auto word = [&](int idx) { return world.model.vocab.token(world.content_ids[static_cast<std::size_t>(idx)]); };
  std::uniform_int_distribution<int> pick_word(0, n_words - 1);
  std::uniform_int_distribution<int> pick_gold(0, n_choices - 1);

  McqDataset base;
  base.language = world.pivot;
  for (int i = 0; i < n_questions; ++i) {
    McqItem item;
    item.id = item_id(id_prefix, i);

    std::vector<int> pool(static_cast<std::size_t>(n_words));
    for (int k = 0; k < n_words; ++k) pool[static_cast<std::size_t>(k)] = k;
    std::shuffle(pool.begin(), pool.end(), rng);
    for (int k = 0; k < shape.question_length; ++k) item.question.push_back(word(pool[static_cast<std::size_t>(k)]));
    const int key = pool[static_cast<std::size_t>(shape.question_length - 1)];

    item.gold = pick_gold(rng);
    std::set<int> heads{key};
    for (int j = 0; j < n_choices; ++j) {
      std::vector<std::string> choice;
      int head = key;
      if (j != item.gold) {
        do {
          head = pick_word(rng);
        } while (heads.count(head));
        heads.insert(head);
      }
      choice.push_back(word(head));
      for (int k = 1; k < shape.choice_length; ++k) choice.push_back(word(pick_word(rng)));
      item.choices.push_back(std::move(choice));
    }

    const std::size_t longest = static_cast<std::size_t>(shape.choice_length);
    if (render_prompt(item, world.tmpl).size() + longest > static_cast<std::size_t>(world.model.config.max_seq_len)) {
      throw DataError("question " + item.id + " does not fit max_seq_len " +
                      std::to_string(world.model.config.max_seq_len));
    }
    base.items.push_back(std::move(item));
  }

  std::vector<McqDataset> out;
  out.push_back(base);
  for (const auto& lex : world.lexicons) {
    McqDataset ds;
    ds.language = lex.code;
    for (const auto& item : base.items) ds.items.push_back(world.translate(item, lex.code));
    out.push_back(std::move(ds));
  }
  return out;
}

void bias_gold_to_predictions(std::vector<McqDataset>& datasets, const LanguageEvaluation& pivot) {
  for (auto& ds : datasets) {
    if (ds.items.size() != pivot.dists.size()) throw DataError("pivot evaluation does not match dataset " + ds.language);
    for (std::size_t i = 0; i < ds.items.size(); ++i) {
      if (ds.items[i].id != pivot.dists[i].item_id) throw DataError("item order mismatch at " + ds.items[i].id);
      ds.items[i].gold = predicted_index(pivot.dists[i]);
    }
  }
}

}  // namespace xling
