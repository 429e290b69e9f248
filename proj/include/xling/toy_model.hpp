#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xling/bundle.hpp"
#include "xling/tensor.hpp"
#include "xling/vocab.hpp"

namespace xling {

// Pre-norm decoder-only transformer with learned absolute positions, causal
// multi-head attention, a GELU MLP, and RMS normalization before the
// unembedding. All weights are drawn from seeded normals:
//   token/position/output embeddings ~ N(0, embedding_std^2)
//   attention and MLP projections   ~ N(0, init_std^2)
//   norm scales                     = 1
struct ToyConfig {
  int n_layers = 4;
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 256;
  int vocab_size = 0;
  int max_seq_len = 64;
  double norm_epsilon = 1e-6;
  std::uint64_t seed = 0;
  bool tied_embeddings = false;
  float init_std = 0.25f;
  float embedding_std = 1.0f;

  // Throws DataError on non-positive sizes or d_model % n_heads != 0.
  void validate() const;
};

struct TransformerBlock {
  TensorF32 attn_norm;  // [d]
  TensorF32 wq, wk, wv, wo;  // [d x d], y = W x
  TensorF32 ffn_norm;  // [d]
  TensorF32 w_up;    // [d_ff x d]
  TensorF32 w_down;  // [d x d_ff]
};

struct Model {
  ToyConfig config;
  Vocabulary vocab;
  TensorF32 token_embedding;     // [vocab x d]
  TensorF32 position_embedding;  // [max_seq_len x d]
  TensorF32 output_embedding;    // [vocab x d]; empty when tied
  std::vector<TransformerBlock> blocks;
  TensorF32 final_norm;  // [d]

  const TensorF32& unembedding() const {
    return config.tied_embeddings ? token_embedding : output_embedding;
  }
  int n_layers() const { return config.n_layers; }
  int d_model() const { return config.d_model; }
  std::size_t vocab_size() const { return vocab.size(); }
};

// Token names default to "t0", "t1", ... when vocab is empty; otherwise
// config.vocab_size must equal vocab.size().
Model init_model(const ToyConfig& config, std::vector<std::string> vocab = {});

// Unembedding, final norm scale, and vocabulary of the model, for the lens.
ModelBundle export_bundle(const Model& model);

// Layer indices address the residual stream: 0 is the embedding output,
// l in [1, n_layers] is the output of block l.
enum class Positions { last, all };

struct CaptureRequest {
  std::vector<int> layers;
  Positions positions = Positions::last;
  Positions logits = Positions::all;
};

// Adds gamma * vector to the residual stream after block `layer`, at
// `position` (-1 = last token), before block layer+1 reads it.
struct Injection {
  int layer = 0;
  std::vector<double> vector;
  double gamma = 1.0;
  int position = -1;
};

struct CaptureResult {
  std::size_t n_positions = 0;
  std::map<std::pair<int, int>, std::vector<float>> states;  // (layer, position)
  std::map<int, std::vector<double>> logits;                 // position -> vocab logits

  const std::vector<float>& state(int layer, int position) const;
  const std::vector<float>& last_state(int layer) const {
    return state(layer, static_cast<int>(n_positions) - 1);
  }
  const std::vector<double>& last_logits() const;
};

CaptureResult forward(const Model& model, const TokenSequence& tokens, const CaptureRequest& capture = {},
                      std::span<const Injection> injections = {});

}  // namespace xling

namespace xling {

// Directory with config.json (config and vocabulary) and one .xlt per weight.
void save_model(const Model& model, const std::filesystem::path& dir);
Model load_model(const std::filesystem::path& dir);

}  // namespace xling
