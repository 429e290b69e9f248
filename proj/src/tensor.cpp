#include "xling/tensor.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "xling/error.hpp"

namespace xling {

namespace {

constexpr char kMagic[4] = {'X', 'L', 'T', '1'};

std::size_t checked_volume(const std::vector<std::uint32_t>& dims) {
  if (dims.empty()) throw DataError("tensor rank 0 is not allowed");
  std::size_t n = 1;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (dims[i] == 0) throw DataError("tensor has zero dimension at axis " + std::to_string(i));
    n *= dims[i];
  }
  return n;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

}  // namespace

TensorF32::TensorF32(std::vector<std::uint32_t> dims) : dims_(std::move(dims)) {
  data_.assign(checked_volume(dims_), 0.0f);
}

TensorF32::TensorF32(std::vector<std::uint32_t> dims, std::vector<float> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  if (checked_volume(dims_) != data_.size()) {
    throw DataError("tensor data length " + std::to_string(data_.size()) +
                    " does not match the product of dims");
  }
}

std::size_t TensorF32::rows() const {
  if (rank() != 2) throw DataError("row access requires a rank-2 tensor");
  return dims_[0];
}

std::size_t TensorF32::cols() const {
  if (rank() != 2) throw DataError("row access requires a rank-2 tensor");
  return dims_[1];
}

std::span<float> TensorF32::row(std::size_t r) {
  const std::size_t c = cols();
  return std::span<float>(data_).subspan(r * c, c);
}

std::span<const float> TensorF32::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const float>(data_).subspan(r * c, c);
}

bool TensorF32::operator==(const TensorF32& other) const {
  return dims_ == other.dims_ && data_.size() == other.data_.size() &&
         std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(float)) == 0;
}

std::vector<std::uint8_t> encode_tensor(const TensorF32& t) {
  checked_volume(t.dims());
  std::vector<std::uint8_t> out;
  out.reserve(8 + 4 * t.rank() + 4 * t.size());
  out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.dims()) put_u32(out, d);
  for (float f : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

TensorF32 decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 3) != 0) {
    throw DataError("not an XLT file");
  }
  if (bytes[3] != static_cast<std::uint8_t>(kMagic[3])) {
    throw DataError(std::string("unsupported XLT version '") + static_cast<char>(bytes[3]) + "'");
  }
  if (bytes.size() < 8) throw DataError("truncated XLT header");
  const std::uint32_t rank = get_u32(bytes.data() + 4);
  if (rank == 0) throw DataError("tensor rank 0 is not allowed");
  if (bytes.size() < 8 + 4ull * rank) throw DataError("truncated XLT header");
  std::vector<std::uint32_t> dims(rank);
  for (std::uint32_t i = 0; i < rank; ++i) dims[i] = get_u32(bytes.data() + 8 + 4 * i);
  const std::size_t n = checked_volume(dims);
  const std::size_t offset = 8 + 4ull * rank;
  if (bytes.size() - offset != 4 * n) throw DataError("payload length mismatch");
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    data[i] = std::bit_cast<float>(get_u32(bytes.data() + offset + 4 * i));
  }
  return TensorF32(std::move(dims), std::move(data));
}

void save_tensor(const TensorF32& t, const std::filesystem::path& path) {
  const auto bytes = encode_tensor(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

TensorF32 load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

}  // namespace xling
