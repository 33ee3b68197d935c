#include "basis/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "basis/kernels.hpp"

namespace basis {

namespace {

[[noreturn]] void shape_error(const char* op, const Matrix& a, const Matrix& b) {
  throw ContractError(std::string(op) + ": incompatible shapes " + shape_string(a) + " and " +
                      shape_string(b));
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error(op, a, b);
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, Real fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<Real> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ContractError("Matrix: data length " + std::to_string(data_.size()) +
                        " does not match " + std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<Real>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<Real> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ContractError("Matrix::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Matrix(r, c, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = Real(1);
  return m;
}

void Matrix::fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

std::string shape_string(const Matrix& m) {
  return "(" + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) + ")";
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  Matrix c(a.rows(), b.cols());
  kernels::omp::gemm_nn(a.values(), b.values(), c.values(), a.rows(), a.cols(), b.cols());
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) shape_error("matmul_tn", a, b);
  Matrix c(a.cols(), b.cols());
  kernels::omp::gemm_tn(a.values(), b.values(), c.values(), a.cols(), a.rows(), b.cols());
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) shape_error("matmul_nt", a, b);
  Matrix c(a.rows(), b.rows());
  kernels::omp::gemm_nt(a.values(), b.values(), c.values(), a.rows(), a.cols(), b.rows());
  return c;
}

Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Real frobenius_norm(const Matrix& a) {
  // Accumulate in double even for 32-bit tensors.
  double acc = 0.0;
  for (Real v : a.values()) acc += double(v) * double(v);
  return static_cast<Real>(std::sqrt(acc));
}

Matrix signed_segment_sum(const Matrix& x, std::span<const std::uint32_t> bins,
                          std::span<const std::int8_t> signs, std::size_t r_bins) {
  if (bins.size() != x.rows() || signs.size() != x.rows()) {
    throw ContractError("signed_segment_sum: x has " + std::to_string(x.rows()) + " rows but " +
                        std::to_string(bins.size()) + " bins and " +
                        std::to_string(signs.size()) + " signs");
  }
  if (r_bins == 0) throw ContractError("signed_segment_sum: r_bins must be positive");
  for (std::size_t b = 0; b < bins.size(); ++b) {
    if (bins[b] >= r_bins) {
      throw ContractError("signed_segment_sum: bin index " + std::to_string(bins[b]) +
                          " at row " + std::to_string(b) + " is outside [0, " +
                          std::to_string(r_bins) + ")");
    }
    if (signs[b] != 1 && signs[b] != -1) {
      throw ContractError("signed_segment_sum: sign at row " + std::to_string(b) +
                          " is not +1 or -1");
    }
  }
  Matrix out(r_bins, x.cols());
  kernels::omp::segment_sum(x.values(), bins, signs, out.values(), x.rows(), x.cols());
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  Matrix c = a;
  add_inplace(c, b);
  return c;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  require_same_shape("subtract", a, b);
  Matrix c = a;
  auto cv = c.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < cv.size(); ++i) cv[i] -= bv[i];
  return c;
}

void add_inplace(Matrix& a, const Matrix& b) {
  require_same_shape("add", a, b);
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) av[i] += bv[i];
}

Matrix scale(const Matrix& a, Real c) {
  Matrix out = a;
  scale_inplace(out, c);
  return out;
}

void scale_inplace(Matrix& a, Real c) {
  for (Real& v : a.values()) v *= c;
}

void add_row_inplace(Matrix& a, const Matrix& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) shape_error("add_row", a, row);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += row(0, j);
  }
}

Matrix column_sum(const Matrix& a) {
  Matrix s(1, a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) s(0, j) += r[j];
  }
  return s;
}

bool all_finite(const Matrix& a) {
  return std::all_of(a.values().begin(), a.values().end(), [](Real v) { return std::isfinite(v); });
}

Real max_abs(const Matrix& a) {
  Real m = 0;
  for (Real v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace basis
