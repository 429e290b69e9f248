#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "test_util.hpp"
#include "xling/error.hpp"
#include "xling/mcq.hpp"

using namespace xling;

namespace {

McqItem item_with(int n_choices, const std::string& id = "q1") {
  McqItem it;
  it.id = id;
  it.question = {"w1", "w2"};
  for (int j = 0; j < n_choices; ++j) it.choices.push_back({"c" + std::to_string(j)});
  it.gold = 0;
  return it;
}

Vocabulary vocab_for(const PromptTemplate& t) {
  auto tokens = t.template_tokens();
  for (const char* w : {"w1", "w2", "c0", "c1", "c2", "c3", "c4"}) tokens.push_back(w);
  return Vocabulary(tokens);
}

AnswerDistribution dist(std::vector<double> p) { return {"x", std::move(p)}; }

}  // namespace

TEST(Prompt, FourChoicesGiveLettersAtoD) {
  const auto tmpl = PromptTemplate::standard();
  const auto vocab = vocab_for(tmpl);
  const Prompt p = build_prompt(item_with(4), tmpl, vocab, 64);
  ASSERT_EQ(p.letter_ids.size(), 4u);
  const char* letters[] = {"A", "B", "C", "D"};
  for (int j = 0; j < 4; ++j) EXPECT_EQ(vocab.token(p.letter_ids[j]), letters[j]);
  EXPECT_EQ(vocab.token(p.tokens.back()), ":");
  EXPECT_EQ(vocab.token(p.tokens[p.tokens.size() - 2]), "Answer");
}

TEST(Prompt, FiveChoicesGiveLettersAtoE) {
  const auto tmpl = PromptTemplate::standard();
  const auto vocab = vocab_for(tmpl);
  const Prompt p = build_prompt(item_with(5), tmpl, vocab, 64);
  ASSERT_EQ(p.letter_ids.size(), 5u);
  EXPECT_EQ(vocab.token(p.letter_ids[4]), "E");
}

TEST(Prompt, RenderingIsDeterministicAndOrdered) {
  const auto tmpl = PromptTemplate::standard();
  const auto vocab = vocab_for(tmpl);
  const auto a = build_prompt(item_with(3), tmpl, vocab, 64);
  const auto b = build_prompt(item_with(3), tmpl, vocab, 64);
  EXPECT_EQ(a.tokens, b.tokens);
  const auto r = render_prompt(item_with(2), tmpl);
  ASSERT_EQ(r.size(), 17u + 12u);
  EXPECT_EQ(std::vector<std::string>(r.end() - 12, r.end()),
            (std::vector<std::string>{"Question", ":", "w1", "w2", "A", ":", "c0", "B", ":", "c1", "Answer", ":"}));
  EXPECT_EQ(std::vector<std::string>(r.begin(), r.begin() + 17), tmpl.preamble);
}

TEST(Prompt, OverflowNamesTheItem) {
  const auto tmpl = PromptTemplate::standard();
  try {
    build_prompt(item_with(4, "long-one"), tmpl, vocab_for(tmpl), 10);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("long-one"), std::string::npos);
  }
}

TEST(Item, Validation) {
  EXPECT_THROW(item_with(1).validate(), DataError);
  McqItem it = item_with(3);
  it.gold = 3;
  EXPECT_THROW(it.validate(), DataError);
  it = item_with(3);
  it.choices[1].clear();
  EXPECT_THROW(it.validate(), DataError);
}

TEST(AnswerDistribution, UniformLogitsGiveUniformProbs) {
  const std::vector<double> logits(30, 0.7);
  const std::vector<TokenId> letters{3, 9, 12, 20};
  const auto d = letter_distribution("u", logits, letters);
  for (double p : d.probs) EXPECT_DOUBLE_EQ(p, 0.25);
}

TEST(AnswerDistribution, HandSoftmax) {
  std::vector<double> logits(10, 5.0);
  const std::vector<TokenId> letters{1, 4, 6, 8};
  logits[1] = 2;
  logits[4] = 1;
  logits[6] = 0;
  logits[8] = -1;
  const auto d = letter_distribution("h", logits, letters);
  const double z = std::exp(2.0) + std::exp(1.0) + 1.0 + std::exp(-1.0);
  EXPECT_NEAR(d.probs[0], std::exp(2.0) / z, 1e-15);
  EXPECT_NEAR(d.probs[1], std::exp(1.0) / z, 1e-15);
  EXPECT_NEAR(d.probs[2], 1.0 / z, 1e-15);
  EXPECT_NEAR(d.probs[3], std::exp(-1.0) / z, 1e-15);
}

// Property: restricting the full-vocabulary softmax to the letters and
// renormalizing equals the letter distribution; adding a constant to every
// logit changes nothing.
TEST(AnswerDistribution, RenormalizedFullSoftmaxAndShiftInvariance) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> nd(0, 3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> logits(40);
    for (auto& l : logits) l = nd(rng);
    const std::vector<TokenId> letters{5, 0, 33, 17, 21};
    double z = 0;
    for (double l : logits) z += std::exp(l);
    std::vector<double> restricted;
    for (TokenId id : letters) restricted.push_back(std::exp(logits[id]) / z);
    const double s = std::accumulate(restricted.begin(), restricted.end(), 0.0);
    const auto d = letter_distribution("p", logits, letters);
    EXPECT_NEAR(std::accumulate(d.probs.begin(), d.probs.end(), 0.0), 1.0, 1e-9);
    for (std::size_t j = 0; j < letters.size(); ++j) EXPECT_NEAR(d.probs[j], restricted[j] / s, 1e-12);
    auto shifted = logits;
    for (auto& l : shifted) l += 123.25;
    const auto ds = letter_distribution("p", shifted, letters);
    for (std::size_t j = 0; j < letters.size(); ++j) EXPECT_NEAR(ds.probs[j], d.probs[j], 1e-12);
  }
}

TEST(Ranks, SortedTiedAndReversed) {
  EXPECT_EQ(rank_answers(dist({0.5, 0.3, 0.15, 0.05})), (std::vector<double>{1, 2, 3, 4}));
  EXPECT_EQ(rank_answers(dist({0.4, 0.4, 0.1, 0.1})), (std::vector<double>{1.5, 1.5, 3.5, 3.5}));
  EXPECT_EQ(rank_answers(dist({0.1, 0.2, 0.3, 0.4})), (std::vector<double>{4, 3, 2, 1}));
  EXPECT_EQ(rank_answers(dist({0.25, 0.25, 0.25, 0.25})), (std::vector<double>{2.5, 2.5, 2.5, 2.5}));
}

// Property: every block sums to J(J+1)/2 whatever the ties, and ranks agree
// with a brute-force count (1 + #greater + #ties/2).
TEST(Ranks, BlockSumsAndPairwiseOracle) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> jd(2, 8), level(0, 3);
  for (int trial = 0; trial < 500; ++trial) {
    const int J = jd(rng);
    std::vector<double> p(J);
    for (auto& v : p) v = level(rng) * 0.1;  // coarse levels force ties
    const auto r = rank_answers(dist(p));
    EXPECT_DOUBLE_EQ(std::accumulate(r.begin(), r.end(), 0.0), J * (J + 1) / 2.0);
    for (int a = 0; a < J; ++a) {
      double greater = 0, equal = 0;
      for (int b = 0; b < J; ++b) {
        if (b == a) continue;
        if (p[b] > p[a]) ++greater;
        if (p[b] == p[a]) ++equal;
      }
      EXPECT_DOUBLE_EQ(r[a], 1 + greater + equal / 2);
    }
  }
}

TEST(Prediction, TiesGoToLowestIndex) {
  EXPECT_EQ(predicted_index(dist({0.1, 0.4, 0.4, 0.1})), 1);
  EXPECT_EQ(predicted_index(dist({0.25, 0.25, 0.25, 0.25})), 0);
  EXPECT_EQ(predicted_index(dist({0.1, 0.2, 0.3, 0.4})), 3);
}

TEST(Evaluation, AccuracyCorrectnessAndRanks) {
  const auto e = make_evaluation("en",
                                 {{"a", {0.7, 0.1, 0.1, 0.1}},
                                  {"b", {0.1, 0.6, 0.2, 0.1}},
                                  {"c", {0.25, 0.25, 0.25, 0.25}},
                                  {"d", {0.1, 0.1, 0.1, 0.7}}},
                                 {0, 2, 0, 3});
  EXPECT_DOUBLE_EQ(e.accuracy(), 0.75);
  const auto cs = e.correctness();
  EXPECT_EQ(cs.correct_ids, (std::set<std::string>{"a", "c", "d"}));
  EXPECT_EQ(cs.wrong_answers, (std::map<std::string, int>{{"b", 1}}));
  const auto rv = e.rank_vector();
  EXPECT_EQ(rv.item_ids, (std::vector<std::string>{"a", "b", "c", "d"}));
  EXPECT_EQ(rv.ranks.size(), 16u);
  EXPECT_THROW(make_evaluation("en", {{"a", {0.5, 0.5}}}, {2}), DataError);
}

// Uniform distributions with gold uniformly random: accuracy is the share of
// gold == 0, close to 1/J.
TEST(Evaluation, UniformModelSitsAtChance) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> g(0, 3);
  std::vector<AnswerDistribution> dists;
  std::vector<int> gold;
  for (int i = 0; i < 4000; ++i) {
    dists.push_back({"i" + std::to_string(i), {0.25, 0.25, 0.25, 0.25}});
    gold.push_back(g(rng));
  }
  const auto e = make_evaluation("x", dists, gold);
  const double want = std::count(gold.begin(), gold.end(), 0) / 4000.0;
  EXPECT_DOUBLE_EQ(e.accuracy(), want);
  EXPECT_NEAR(e.accuracy(), 0.25, 0.03);
}

TEST(Evaluation, PerfectPredictionsScoreOne) {
  const auto e = make_evaluation("x", {{"a", {0.1, 0.9}}, {"b", {0.8, 0.2}}}, {1, 0});
  EXPECT_DOUBLE_EQ(e.accuracy(), 1.0);
}

TEST(Dataset, SaveLoadAndParallelCheck) {
  testutil::TempDir tmp("mcq");
  McqDataset ds{"en", {item_with(4, "q1"), item_with(3, "q2")}};
  ds.items[1].gold = 2;
  save_dataset(ds, tmp / "en.jsonl");
  const McqDataset back = load_dataset(tmp / "en.jsonl", "en");
  ASSERT_EQ(back.items.size(), 2u);
  EXPECT_EQ(back.items[1].id, "q2");
  EXPECT_EQ(back.items[1].gold, 2);
  EXPECT_EQ(back.items[0].choices, ds.items[0].choices);
  EXPECT_NO_THROW(check_parallel(ds, back));
  McqDataset other = back;
  other.items[1].gold = 1;
  EXPECT_THROW(check_parallel(ds, other), DataError);
  other = back;
  other.items.pop_back();
  EXPECT_THROW(check_parallel(ds, other), DataError);
}

TEST(Dataset, MalformedFilesRejected) {
  testutil::TempDir tmp("mcq");
  testutil::write_file(tmp / "a.jsonl", "{\"id\":\"x\",\"question\":[\"a\"],\"choices\":[[\"b\"]],\"gold\":0}\n");
  EXPECT_THROW(load_dataset(tmp / "a.jsonl", "a"), DataError);
  testutil::write_file(tmp / "b.jsonl", "not json\n");
  EXPECT_THROW(load_dataset(tmp / "b.jsonl", "b"), DataError);
  const std::string line = "{\"id\":\"x\",\"question\":[\"a\"],\"choices\":[[\"b\"],[\"c\"]],\"gold\":1}\n";
  testutil::write_file(tmp / "c.jsonl", line + line);
  EXPECT_THROW(load_dataset(tmp / "c.jsonl", "c"), DataError);
  EXPECT_THROW(load_dataset(tmp / "none.jsonl", "c"), DataError);
}

TEST(Dataset, EmptyDatasetCannotBeEvaluated) {
  ToyConfig c;
  c.n_layers = 1;
  c.d_model = 8;
  c.n_heads = 2;
  c.d_ff = 8;
  c.vocab_size = 4;
  const Model m = init_model(c);
  EXPECT_THROW(evaluate_dataset(m, McqDataset{"en", {}}, PromptTemplate::standard()), DataError);
}

TEST(Template, DuplicateLettersRejected) {
  PromptTemplate t = PromptTemplate::standard();
  t.letters[1] = "A";
  EXPECT_THROW(t.validate(), DataError);
}
