#include "xling/toy_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "xling/error.hpp"
#include "xling/random.hpp"

namespace xling {

namespace {

TensorF32 normal_tensor(std::vector<std::uint32_t> dims, float stddev, std::uint64_t seed,
                        const std::string& tag) {
  TensorF32 t(std::move(dims));
  auto rng = make_stream(seed, tag);
  std::normal_distribution<float> dist(0.0f, stddev);
  for (float& v : t.data()) v = dist(rng);
  return t;
}

TensorF32 ones(std::uint32_t n) {
  TensorF32 t({n});
  std::fill(t.data().begin(), t.data().end(), 1.0f);
  return t;
}

void rms_norm_into(std::span<const float> x, std::span<const float> scale, double eps, std::vector<float>& out) {
  double ss = 0.0;
  for (float v : x) ss += static_cast<double>(v) * v;
  const double inv = 1.0 / std::sqrt(ss / static_cast<double>(x.size()) + eps);
  out.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<float>(x[i] * inv * scale[i]);
}

// y = W x with W [out x in], double accumulation.
void matvec(const TensorF32& w, std::span<const float> x, std::vector<float>& y) {
  const std::size_t out = w.rows();
  const std::size_t in = w.cols();
  y.resize(out);
  const float* wp = w.data().data();
  const float* xp = x.data();
  for (std::size_t r = 0; r < out; ++r) {
    // Independent partial sums break the dependency chain of one accumulator
    // and let the compiler vectorize; the order is fixed, so results are too.
    double acc[8] = {};
    const float* row = wp + r * in;
    std::size_t c = 0;
    for (; c + 8 <= in; c += 8) {
      for (std::size_t k = 0; k < 8; ++k) acc[k] += static_cast<double>(row[c + k]) * static_cast<double>(xp[c + k]);
    }
    for (; c < in; ++c) acc[0] += static_cast<double>(row[c]) * xp[c];
    y[r] = static_cast<float>(((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])));
  }
}

float gelu(float x) {
  const double xd = x;
  const double k = std::sqrt(2.0 / std::numbers::pi);
  return static_cast<float>(0.5 * xd * (1.0 + std::tanh(k * (xd + 0.044715 * xd * xd * xd))));
}

using Residual = std::vector<std::vector<float>>;  // [position][d]

void attention(const TransformerBlock& b, const ToyConfig& cfg, Residual& x) {
  const std::size_t n = x.size();
  const std::size_t d = static_cast<std::size_t>(cfg.d_model);
  const std::size_t heads = static_cast<std::size_t>(cfg.n_heads);
  const std::size_t hd = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Residual q(n), k(n), v(n);
  std::vector<float> h;
  for (std::size_t t = 0; t < n; ++t) {
    rms_norm_into(x[t], b.attn_norm.data(), cfg.norm_epsilon, h);
    matvec(b.wq, h, q[t]);
    matvec(b.wk, h, k[t]);
    matvec(b.wv, h, v[t]);
  }

  std::vector<float> mixed(d), out;
  std::vector<double> scores;
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t hh = 0; hh < heads; ++hh) {
      const std::size_t off = hh * hd;
      scores.assign(t + 1, 0.0);
      double mx = -INFINITY;
      for (std::size_t s = 0; s <= t; ++s) {
        double dot = 0.0;
        for (std::size_t i = 0; i < hd; ++i) dot += static_cast<double>(q[t][off + i]) * k[s][off + i];
        scores[s] = dot * scale;
        mx = std::max(mx, scores[s]);
      }
      double z = 0.0;
      for (double& sc : scores) {
        sc = std::exp(sc - mx);
        z += sc;
      }
      for (std::size_t i = 0; i < hd; ++i) {
        double acc = 0.0;
        for (std::size_t s = 0; s <= t; ++s) acc += scores[s] * v[s][off + i];
        mixed[off + i] = static_cast<float>(acc / z);
      }
    }
    matvec(b.wo, mixed, out);
    for (std::size_t i = 0; i < d; ++i) x[t][i] += out[i];
  }
}

void mlp(const TransformerBlock& b, const ToyConfig& cfg, Residual& x) {
  std::vector<float> h, up, down;
  for (auto& row : x) {
    rms_norm_into(row, b.ffn_norm.data(), cfg.norm_epsilon, h);
    matvec(b.w_up, h, up);
    for (float& u : up) u = gelu(u);
    matvec(b.w_down, up, down);
    for (std::size_t i = 0; i < row.size(); ++i) row[i] += down[i];
  }
}

}  // namespace

void ToyConfig::validate() const {
  if (n_layers <= 0 || d_model <= 0 || n_heads <= 0 || d_ff <= 0 || vocab_size <= 0 || max_seq_len <= 0) {
    throw DataError("toy config dimensions must all be positive");
  }
  if (d_model % n_heads != 0) {
    throw DataError("d_model " + std::to_string(d_model) + " is not divisible by n_heads " +
                    std::to_string(n_heads));
  }
  if (!(norm_epsilon >= 0.0) || !(init_std >= 0.0f) || !(embedding_std >= 0.0f)) {
    throw DataError("toy config scales must be non-negative");
  }
}

Model init_model(const ToyConfig& config, std::vector<std::string> vocab) {
  if (vocab.empty() && config.vocab_size > 0) {
    for (int i = 0; i < config.vocab_size; ++i) vocab.push_back("t" + std::to_string(i));
  }
  if (static_cast<int>(vocab.size()) != config.vocab_size) {
    throw DataError("vocab has " + std::to_string(vocab.size()) + " tokens but config.vocab_size is " +
                    std::to_string(config.vocab_size));
  }
  config.validate();

  const auto d = static_cast<std::uint32_t>(config.d_model);
  const auto ff = static_cast<std::uint32_t>(config.d_ff);
  const auto v = static_cast<std::uint32_t>(config.vocab_size);
  const auto seed = config.seed;

  Model m;
  m.config = config;
  m.vocab = Vocabulary(std::move(vocab));
  m.token_embedding = normal_tensor({v, d}, config.embedding_std, seed, "tok_emb");
  m.position_embedding =
      normal_tensor({static_cast<std::uint32_t>(config.max_seq_len), d}, config.embedding_std, seed, "pos_emb");
  if (!config.tied_embeddings) m.output_embedding = normal_tensor({v, d}, config.embedding_std, seed, "out_emb");
  for (int l = 0; l < config.n_layers; ++l) {
    const std::string p = "block" + std::to_string(l) + ".";
    TransformerBlock b;
    b.attn_norm = ones(d);
    b.wq = normal_tensor({d, d}, config.init_std, seed, p + "wq");
    b.wk = normal_tensor({d, d}, config.init_std, seed, p + "wk");
    b.wv = normal_tensor({d, d}, config.init_std, seed, p + "wv");
    b.wo = normal_tensor({d, d}, config.init_std, seed, p + "wo");
    b.ffn_norm = ones(d);
    b.w_up = normal_tensor({ff, d}, config.init_std, seed, p + "w_up");
    b.w_down = normal_tensor({d, ff}, config.init_std, seed, p + "w_down");
    m.blocks.push_back(std::move(b));
  }
  m.final_norm = ones(d);
  return m;
}

ModelBundle export_bundle(const Model& model) {
  ModelBundle b;
  b.unembedding = model.unembedding();
  b.final_norm_scale = model.final_norm;
  b.vocab = model.vocab.tokens();
  b.norm_epsilon = model.config.norm_epsilon;
  return b;
}

const std::vector<float>& CaptureResult::state(int layer, int position) const {
  auto it = states.find({layer, position});
  if (it == states.end()) {
    throw DataError("layer " + std::to_string(layer) + " position " + std::to_string(position) +
                    " was not captured");
  }
  return it->second;
}

const std::vector<double>& CaptureResult::last_logits() const {
  auto it = logits.find(static_cast<int>(n_positions) - 1);
  if (it == logits.end()) throw DataError("last-position logits were not computed");
  return it->second;
}

CaptureResult forward(const Model& model, const TokenSequence& tokens, const CaptureRequest& capture,
                      std::span<const Injection> injections) {
  const ToyConfig& cfg = model.config;
  const std::size_t n = tokens.size();
  const std::size_t d = static_cast<std::size_t>(cfg.d_model);
  if (n == 0) throw DataError("forward requires a non-empty token sequence");
  if (n > static_cast<std::size_t>(cfg.max_seq_len)) {
    throw DataError("sequence of " + std::to_string(n) + " tokens exceeds max_seq_len " +
                    std::to_string(cfg.max_seq_len));
  }
  for (TokenId t : tokens) {
    if (t < 0 || static_cast<std::size_t>(t) >= model.vocab_size()) {
      throw DataError("token id " + std::to_string(t) + " out of range");
    }
  }
  for (int l : capture.layers) {
    if (l < 0 || l > cfg.n_layers) throw DataError("capture layer " + std::to_string(l) + " out of range");
  }
  for (const auto& inj : injections) {
    if (inj.layer < 0 || inj.layer > cfg.n_layers) {
      throw DataError("injection layer " + std::to_string(inj.layer) + " out of range");
    }
    if (inj.vector.size() != d) {
      throw DataError("injection vector has " + std::to_string(inj.vector.size()) + " entries, expected d_model " +
                      std::to_string(d));
    }
    if (inj.position < -1 || inj.position >= static_cast<int>(n)) {
      throw DataError("injection position out of range");
    }
  }

  Residual x(n, std::vector<float>(d));
  for (std::size_t t = 0; t < n; ++t) {
    const auto e = model.token_embedding.row(static_cast<std::size_t>(tokens[t]));
    const auto p = model.position_embedding.row(t);
    for (std::size_t i = 0; i < d; ++i) x[t][i] = e[i] + p[i];
  }

  CaptureResult result;
  result.n_positions = n;
  auto after_layer = [&](int layer) {
    for (const auto& inj : injections) {
      if (inj.layer != layer || inj.gamma == 0.0) continue;
      auto& row = x[inj.position < 0 ? n - 1 : static_cast<std::size_t>(inj.position)];
      for (std::size_t i = 0; i < d; ++i) {
        row[i] = static_cast<float>(static_cast<double>(row[i]) + inj.gamma * inj.vector[i]);
      }
    }
    if (std::find(capture.layers.begin(), capture.layers.end(), layer) == capture.layers.end()) return;
    if (capture.positions == Positions::all) {
      for (std::size_t t = 0; t < n; ++t) result.states[{layer, static_cast<int>(t)}] = x[t];
    } else {
      result.states[{layer, static_cast<int>(n - 1)}] = x[n - 1];
    }
  };

  after_layer(0);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const auto& block = model.blocks[static_cast<std::size_t>(l)];
    attention(block, cfg, x);
    mlp(block, cfg, x);
    after_layer(l + 1);
  }

  const std::size_t first = capture.logits == Positions::all ? 0 : n - 1;
  for (std::size_t t = first; t < n; ++t) {
    result.logits[static_cast<int>(t)] =
        head_logits(x[t], model.unembedding(), model.final_norm.data(), cfg.norm_epsilon);
  }
  return result;
}

}  // namespace xling
