#include "basis/kernels.hpp"

#if defined(_OPENMP)
#include <omp.h>
#endif

#include <algorithm>
#include <cstdint>

namespace basis::kernels {

namespace {
// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = std::size_t(1) << 15;
constexpr std::size_t kColumnBlock = 32;
}  // namespace

namespace omp {

void gemm_nn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c,
             std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    Real* ci = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] = Real(0);
    for (std::size_t p = 0; p < k; ++p) {
      const Real aip = a[i * k + p];
      const Real* bp = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

void gemm_tn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c,
             std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    Real* ci = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) ci[j] = Real(0);
    for (std::size_t p = 0; p < k; ++p) {
      const Real api = a[p * m + i];
      const Real* bp = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

void gemm_nt(std::span<const Real> a, std::span<const Real> b, std::span<Real> c,
             std::size_t m, std::size_t k, std::size_t n) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelWork)
  for (std::int64_t ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const Real* ai = a.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const Real* bj = b.data() + j * k;
      Real acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      c[i * n + j] = acc;
    }
  }
}

void segment_sum(std::span<const Real> x, std::span<const std::uint32_t> bins,
                 std::span<const std::int8_t> signs, std::span<Real> out,
                 std::size_t rows, std::size_t n) {
  // Column blocks are disjoint, and within a block rows are visited in
  // ascending order exactly as in the serial loop.
  const auto blocks = static_cast<std::int64_t>((n + kColumnBlock - 1) / kColumnBlock);
#pragma omp parallel for schedule(static) if (rows * n >= kParallelWork)
  for (std::int64_t blk = 0; blk < blocks; ++blk) {
    const std::size_t j0 = static_cast<std::size_t>(blk) * kColumnBlock;
    const std::size_t j1 = std::min(n, j0 + kColumnBlock);
    for (std::size_t b = 0; b < rows; ++b) {
      Real* o = out.data() + std::size_t(bins[b]) * n;
      const Real* xb = x.data() + b * n;
      if (signs[b] > 0) {
        for (std::size_t j = j0; j < j1; ++j) o[j] += xb[j];
      } else {
        for (std::size_t j = j0; j < j1; ++j) o[j] -= xb[j];
      }
    }
  }
}

}  // namespace omp

bool openmp_enabled() {
#if defined(_OPENMP)
  return true;
#else
  return false;
#endif
}

int max_threads() {
#if defined(_OPENMP)
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace basis::kernels
