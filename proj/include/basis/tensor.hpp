#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "basis/errors.hpp"

namespace basis {

#if defined(BASIS_SINGLE_PRECISION)
using Real = float;
#else
using Real = double;
#endif

/// Dense row-major matrix. The only tensor type in the library; vectors are
/// represented as 1 x n matrices.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, Real fill = Real(0));
  Matrix(std::size_t rows, std::size_t cols, std::vector<Real> data);

  static Matrix from_rows(std::initializer_list<std::initializer_list<Real>> rows);
  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  Real& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<Real> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const Real> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }

  void fill(Real v);

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

std::string shape_string(const Matrix& m);

// Products. matmul_tn computes a^T b and matmul_nt computes a b^T without
// materializing the transpose.
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

Real frobenius_norm(const Matrix& a);

/// Row r of the result is the signed sum of the rows of x assigned to bin r.
/// Empty bins produce zero rows.
Matrix signed_segment_sum(const Matrix& x, std::span<const std::uint32_t> bins,
                          std::span<const std::int8_t> signs, std::size_t r_bins);

// Elementwise helpers. Shapes must match exactly; there is no broadcasting.
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
void add_inplace(Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, Real c);
void scale_inplace(Matrix& a, Real c);
void add_row_inplace(Matrix& a, const Matrix& row);  // row is 1 x a.cols()
Matrix column_sum(const Matrix& a);                   // 1 x a.cols()
bool all_finite(const Matrix& a);
Real max_abs(const Matrix& a);

}  // namespace basis
