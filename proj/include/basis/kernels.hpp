#pragma once

// Raw row-major kernels behind the Matrix operations.
//
// Two implementations share each signature: `serial` is the reference used by
// tests and `omp` partitions the output across OpenMP threads. Every output
// element is produced by exactly one thread with the same accumulation order
// as the serial loop, so both variants are bitwise identical.

#include <cstddef>
#include <cstdint>
#include <span>

#include "basis/tensor.hpp"

namespace basis::kernels {

namespace serial {

// c (m x n) = a (m x k) * b (k x n)
void gemm_nn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c,
             std::size_t m, std::size_t k, std::size_t n);
// c (m x n) = a^T * b, a is k x m, b is k x n
void gemm_tn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c,
             std::size_t m, std::size_t k, std::size_t n);
// c (m x n) = a * b^T, a is m x k, b is n x k
void gemm_nt(std::span<const Real> a, std::span<const Real> b, std::span<Real> c,
             std::size_t m, std::size_t k, std::size_t n);
// out (r_bins x n) = signed segment sum of x (rows x n); out must be zeroed.
void segment_sum(std::span<const Real> x, std::span<const std::uint32_t> bins,
                 std::span<const std::int8_t> signs, std::span<Real> out,
                 std::size_t rows, std::size_t n);

}  // namespace serial

namespace omp {

void gemm_nn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c,
             std::size_t m, std::size_t k, std::size_t n);
void gemm_tn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c,
             std::size_t m, std::size_t k, std::size_t n);
void gemm_nt(std::span<const Real> a, std::span<const Real> b, std::span<Real> c,
             std::size_t m, std::size_t k, std::size_t n);
void segment_sum(std::span<const Real> x, std::span<const std::uint32_t> bins,
                 std::span<const std::int8_t> signs, std::span<Real> out,
                 std::size_t rows, std::size_t n);

}  // namespace omp

// True when the library was compiled with OpenMP support.
bool openmp_enabled();
int max_threads();

}  // namespace basis::kernels
