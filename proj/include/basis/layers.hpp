#pragma once

// Manually differentiated layer primitives. Each forward returns its output
// together with the minimal state its backward needs.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "basis/sketch.hpp"
#include "basis/tensor.hpp"

namespace basis {

struct DenseParams {
  Matrix weight;               // N x M
  std::optional<Matrix> bias;  // 1 x M
};

struct ExactCache {
  Matrix x;  // full B x N input
  const DenseParams* params = nullptr;

  std::size_t cached_floats() const { return x.size(); }
};

struct BasisCache {
  SketchedTensor x_hat;  // rank x N; the input itself is not kept
  SketchPlan plan;
  Real lambda = 0;
  ScalingMode scaling = ScalingMode::invariant;
  const DenseParams* params = nullptr;

  std::size_t cached_floats() const { return x_hat.values.size(); }
  std::size_t cached_index_ints() const { return plan.bins.size() + plan.signs.size(); }
};

struct BasisOptions {
  std::size_t rank = 1;
  Real lambda = 0;  // shrinkage, in [0, 1)
  Real epsilon = kDefaultEpsilon;
  ScalingMode scaling = ScalingMode::invariant;
};

template <class Cache>
struct ForwardResult {
  Matrix y;
  Cache cache;
};

struct DenseGradients {
  Matrix dx;
  Matrix dw;
  std::optional<Matrix> db;
};

ForwardResult<ExactCache> dense_forward_exact(const Matrix& x, const DenseParams& params);
DenseGradients dense_backward_exact(const Matrix& dy, const ExactCache& cache);

/// Exact output; caches only the invariant-scaled sketch of x and its plan.
ForwardResult<BasisCache> basis_dense_forward(const Matrix& x, const DenseParams& params,
                                              const BasisOptions& options, std::uint64_t seed);
/// dx is exact. dw is estimated from the cached sketch and a sketch of dy
/// taken with the same plan.
DenseGradients basis_dense_backward(const Matrix& dy, const BasisCache& cache);

// ---------------------------------------------------------------------------
// Elementwise activations.

struct ReluCache {
  std::vector<std::uint8_t> positive;
  std::size_t rows = 0, cols = 0;
};
ForwardResult<ReluCache> relu_forward(const Matrix& x);
Matrix relu_backward(const Matrix& dy, const ReluCache& cache);

// Exact (erf) GELU.
struct GeluCache {
  Matrix x;
};
Real gelu(Real x);
Real gelu_derivative(Real x);
ForwardResult<GeluCache> gelu_forward(const Matrix& x);
Matrix gelu_backward(const Matrix& dy, const GeluCache& cache);

// ---------------------------------------------------------------------------
// Row-wise layer normalization with a learned affine map.

inline constexpr Real kLayerNormEpsilon = Real(1e-5);

struct LayerNormCache {
  Matrix normalized;         // before the affine map
  std::vector<Real> inv_std; // one per row
};
struct LayerNormGradients {
  Matrix dx;
  Matrix dscale;
  Matrix dshift;
};
ForwardResult<LayerNormCache> layernorm_forward(const Matrix& x, const Matrix& scale,
                                                const Matrix& shift);
LayerNormGradients layernorm_backward(const Matrix& dy, const LayerNormCache& cache,
                                      const Matrix& scale);

// ---------------------------------------------------------------------------
// Token embedding: row lookup forward, scatter-add backward.

Matrix embedding_forward(std::span<const std::int32_t> ids, const Matrix& table);
Matrix embedding_backward(std::span<const std::int32_t> ids, const Matrix& dy,
                          std::size_t vocab_size);

// ---------------------------------------------------------------------------
// Multi-head causal scaled dot-product attention over already projected
// q, k, v, each (batch * seq_len) x d_model with heads laid out as
// contiguous column blocks.

struct AttentionCache {
  Matrix q, k, v;
  std::vector<Matrix> probs;  // one seq_len x seq_len matrix per (sequence, head)
  std::size_t batch = 0, seq_len = 0, n_heads = 0;
};
struct AttentionGradients {
  Matrix dq, dk, dv;
};
ForwardResult<AttentionCache> causal_attention_forward(const Matrix& q, const Matrix& k,
                                                       const Matrix& v, std::size_t batch,
                                                       std::size_t seq_len, std::size_t n_heads);
AttentionGradients causal_attention_backward(const Matrix& dout, const AttentionCache& cache);

// ---------------------------------------------------------------------------

struct LossResult {
  double loss = 0;
  Matrix dlogits;
};
/// Mean negative log-likelihood over rows; dlogits = (softmax - onehot) / rows.
LossResult softmax_cross_entropy(const Matrix& logits, std::span<const std::int32_t> targets);

/// Mean over all entries of (y - target)^2 and its gradient.
LossResult mean_squared_error(const Matrix& y, const Matrix& target);

}  // namespace basis
