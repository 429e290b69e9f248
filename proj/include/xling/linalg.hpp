#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "xling/tensor.hpp"

namespace xling {

// Dense row-major double matrix used for all metric arithmetic.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix from_tensor(const TensorF32& t);
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  std::span<double> row(std::size_t r) { return std::span<double>(data_).subspan(r * cols_, cols_); }
  std::span<const double> row(std::size_t r) const { return std::span<const double>(data_).subspan(r * cols_, cols_); }
  std::span<const double> data() const { return data_; }

  Matrix transpose() const;
  Matrix operator*(const Matrix& other) const;
  // Subtracts each column's mean.
  Matrix centered_columns() const;
  // Rows listed in `order`.
  Matrix permuted_rows(std::span<const std::size_t> order) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

struct SvdResult {
  std::vector<double> singular_values;  // non-increasing, length = cols
  Matrix v;                             // cols x cols, column i = right singular vector i
  Matrix us;                            // rows x cols, column i = sigma_i * u_i
};

// One-sided (Hestenes) Jacobi SVD with a fixed cyclic sweep order, so the
// result is reproducible bit for bit for a given input.
SvdResult jacobi_svd(const Matrix& a, int max_sweeps = 60);

}  // namespace xling
