#include <fstream>
#include <json.hpp>

#include "xling/error.hpp"
#include "xling/toy_model.hpp"

namespace xling {

namespace {

const char* const kBlockTensors[] = {"attn_norm", "wq", "wk", "wv", "wo", "ffn_norm", "w_up", "w_down"};

template <typename Block>
auto& block_tensor(Block& b, std::string_view name) {
  if (name == "attn_norm") return b.attn_norm;
  if (name == "wq") return b.wq;
  if (name == "wk") return b.wk;
  if (name == "wv") return b.wv;
  if (name == "wo") return b.wo;
  if (name == "ffn_norm") return b.ffn_norm;
  if (name == "w_up") return b.w_up;
  return b.w_down;
}

void expect_dims(const TensorF32& t, std::vector<std::uint32_t> dims, const std::string& what) {
  if (t.dims() != dims) throw DataError("model tensor " + what + " has the wrong shape");
}

}  // namespace

void save_model(const Model& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& c = model.config;
  nlohmann::ordered_json doc;
  doc["n_layers"] = c.n_layers;
  doc["d_model"] = c.d_model;
  doc["n_heads"] = c.n_heads;
  doc["d_ff"] = c.d_ff;
  doc["vocab_size"] = c.vocab_size;
  doc["max_seq_len"] = c.max_seq_len;
  doc["norm_epsilon"] = c.norm_epsilon;
  doc["seed"] = c.seed;
  doc["tied_embeddings"] = c.tied_embeddings;
  doc["init_std"] = c.init_std;
  doc["embedding_std"] = c.embedding_std;
  doc["vocab"] = model.vocab.tokens();
  std::ofstream out(dir / "config.json");
  if (!out) throw DataError("cannot write " + (dir / "config.json").string());
  out << doc.dump(1) << '\n';

  save_tensor(model.token_embedding, dir / "token_embedding.xlt");
  save_tensor(model.position_embedding, dir / "position_embedding.xlt");
  if (!c.tied_embeddings) save_tensor(model.output_embedding, dir / "output_embedding.xlt");
  save_tensor(model.final_norm, dir / "final_norm.xlt");
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    for (const char* name : kBlockTensors) {
      save_tensor(block_tensor(model.blocks[i], name), dir / ("block" + std::to_string(i) + "_" + name + ".xlt"));
    }
  }
}

Model load_model(const std::filesystem::path& dir) {
  std::ifstream in(dir / "config.json");
  if (!in) throw DataError("cannot open " + (dir / "config.json").string());
  Model m;
  try {
    const auto doc = nlohmann::json::parse(in);
    auto& c = m.config;
    c.n_layers = doc.at("n_layers").get<int>();
    c.d_model = doc.at("d_model").get<int>();
    c.n_heads = doc.at("n_heads").get<int>();
    c.d_ff = doc.at("d_ff").get<int>();
    c.vocab_size = doc.at("vocab_size").get<int>();
    c.max_seq_len = doc.at("max_seq_len").get<int>();
    c.norm_epsilon = doc.at("norm_epsilon").get<double>();
    c.seed = doc.at("seed").get<std::uint64_t>();
    c.tied_embeddings = doc.at("tied_embeddings").get<bool>();
    c.init_std = doc.at("init_std").get<float>();
    c.embedding_std = doc.at("embedding_std").get<float>();
    m.vocab = Vocabulary(doc.at("vocab").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed config.json in " + dir.string() + ": " + e.what());
  }
  const auto& c = m.config;
  c.validate();
  if (static_cast<std::size_t>(c.vocab_size) != m.vocab.size()) throw DataError("vocab_size does not match vocab");

  const auto v = static_cast<std::uint32_t>(c.vocab_size);
  const auto d = static_cast<std::uint32_t>(c.d_model);
  const auto ff = static_cast<std::uint32_t>(c.d_ff);
  m.token_embedding = load_tensor(dir / "token_embedding.xlt");
  expect_dims(m.token_embedding, {v, d}, "token_embedding");
  m.position_embedding = load_tensor(dir / "position_embedding.xlt");
  expect_dims(m.position_embedding, {static_cast<std::uint32_t>(c.max_seq_len), d}, "position_embedding");
  if (!c.tied_embeddings) {
    m.output_embedding = load_tensor(dir / "output_embedding.xlt");
    expect_dims(m.output_embedding, {v, d}, "output_embedding");
  }
  m.final_norm = load_tensor(dir / "final_norm.xlt");
  expect_dims(m.final_norm, {d}, "final_norm");
  m.blocks.resize(static_cast<std::size_t>(c.n_layers));
  for (std::size_t i = 0; i < m.blocks.size(); ++i) {
    for (const char* name : kBlockTensors) {
      const std::string file = "block" + std::to_string(i) + "_" + name + ".xlt";
      auto& t = block_tensor(m.blocks[i], name);
      t = load_tensor(dir / file);
      const std::string_view n = name;
      if (n == "attn_norm" || n == "ffn_norm") expect_dims(t, {d}, file);
      else if (n == "w_up") expect_dims(t, {ff, d}, file);
      else if (n == "w_down") expect_dims(t, {d, ff}, file);
      else expect_dims(t, {d, d}, file);
    }
  }
  return m;
}

}  // namespace xling
