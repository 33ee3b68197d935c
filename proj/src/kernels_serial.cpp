#include "basis/kernels.hpp"

namespace basis::kernels::serial {

void gemm_nn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
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
  for (std::size_t i = 0; i < m * n; ++i) c[i] = Real(0);
  for (std::size_t p = 0; p < k; ++p) {
    const Real* ap = a.data() + p * m;
    const Real* bp = b.data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const Real api = ap[i];
      Real* ci = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

void gemm_nt(std::span<const Real> a, std::span<const Real> b, std::span<Real> c,
             std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
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
  for (std::size_t b = 0; b < rows; ++b) {
    Real* o = out.data() + std::size_t(bins[b]) * n;
    const Real* xb = x.data() + b * n;
    if (signs[b] > 0) {
      for (std::size_t j = 0; j < n; ++j) o[j] += xb[j];
    } else {
      for (std::size_t j = 0; j < n; ++j) o[j] -= xb[j];
    }
  }
}

}  // namespace basis::kernels::serial
