#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace xling {

// Dense row-major float32 array. Rank 0 is not representable; a scalar is a
// rank-1 tensor of length 1.
class TensorF32 {
 public:
  TensorF32() = default;
  // Zero-filled tensor. Throws DataError on an empty shape or a zero dimension.
  explicit TensorF32(std::vector<std::uint32_t> dims);
  TensorF32(std::vector<std::uint32_t> dims, std::vector<float> data);

  static TensorF32 matrix(std::size_t rows, std::size_t cols) {
    return TensorF32({static_cast<std::uint32_t>(rows), static_cast<std::uint32_t>(cols)});
  }

  std::size_t rank() const { return dims_.size(); }
  const std::vector<std::uint32_t>& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  // Row access for rank-2 tensors.
  std::size_t rows() const;
  std::size_t cols() const;
  std::span<float> row(std::size_t r);
  std::span<const float> row(std::size_t r) const;

  float& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  float at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  bool operator==(const TensorF32& other) const;

 private:
  std::vector<std::uint32_t> dims_;
  std::vector<float> data_;
};

// ".xlt" format: "XLT1", u32 rank, rank x u32 dims, float32 payload; all
// little-endian.
void save_tensor(const TensorF32& t, const std::filesystem::path& path);
TensorF32 load_tensor(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_tensor(const TensorF32& t);
TensorF32 decode_tensor(std::span<const std::uint8_t> bytes);

}  // namespace xling
