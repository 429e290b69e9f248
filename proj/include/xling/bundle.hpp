#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xling/tensor.hpp"

namespace xling {

// Everything needed to read a hidden state out through the model's output
// head: RMS normalization with a learned scale, then the unembedding matrix.
struct ModelBundle {
  TensorF32 unembedding;       // [vocab_size x d_model]
  TensorF32 final_norm_scale;  // [d_model]
  std::vector<std::string> vocab;
  double norm_epsilon = 1e-6;

  std::size_t d_model() const { return unembedding.cols(); }
  std::size_t vocab_size() const { return unembedding.rows(); }

  // Throws DataError if shapes disagree or token strings repeat.
  void validate() const;
  // -1 if absent.
  std::int64_t token_id(const std::string& token) const;
};

// x / sqrt(mean(x^2) + eps) * scale, accumulated in double.
std::vector<double> rms_normalize(std::span<const float> h, std::span<const float> scale, double eps);

// U * rms_normalize(h). This is the model's own output head; the logit lens
// reuses it verbatim at every layer.
std::vector<double> head_logits(std::span<const float> h, const TensorF32& unembedding,
                                std::span<const float> norm_scale, double eps);
std::vector<double> head_logits(std::span<const float> h, const ModelBundle& bundle);

// Numerically stable softmax (max subtraction, double accumulation).
std::vector<double> softmax(std::span<const double> logits);

// Directory layout: unembedding.xlt, final_norm.xlt, vocab.json.
void save_bundle(const ModelBundle& b, const std::filesystem::path& dir);
ModelBundle load_bundle(const std::filesystem::path& dir);

}  // namespace xling
