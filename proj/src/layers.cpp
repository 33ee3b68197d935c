#include "basis/layers.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace basis {

namespace {

void check_dense_input(const char* op, const Matrix& x, const DenseParams& params) {
  if (x.cols() != params.weight.rows()) {
    throw ContractError(std::string(op) + ": input " + shape_string(x) + " does not match weight " +
                        shape_string(params.weight));
  }
  if (params.bias && (params.bias->rows() != 1 || params.bias->cols() != params.weight.cols())) {
    throw ContractError(std::string(op) + ": bias " + shape_string(*params.bias) +
                        " does not match weight " + shape_string(params.weight));
  }
}

Matrix dense_output(const Matrix& x, const DenseParams& params) {
  Matrix y = matmul(x, params.weight);
  if (params.bias) add_row_inplace(y, *params.bias);
  return y;
}

void check_upstream(const char* op, const Matrix& dy, std::size_t rows, const DenseParams* params) {
  if (params == nullptr) throw ContractError(std::string(op) + ": cache has no parameters");
  if (dy.rows() != rows || dy.cols() != params->weight.cols()) {
    throw ContractError(std::string(op) + ": upstream gradient " + shape_string(dy) +
                        " does not match " + std::to_string(rows) + " rows x " +
                        std::to_string(params->weight.cols()) + " outputs");
  }
}

}  // namespace

ForwardResult<ExactCache> dense_forward_exact(const Matrix& x, const DenseParams& params) {
  check_dense_input("dense_forward_exact", x, params);
  return {dense_output(x, params), ExactCache{x, &params}};
}

DenseGradients dense_backward_exact(const Matrix& dy, const ExactCache& cache) {
  check_upstream("dense_backward_exact", dy, cache.x.rows(), cache.params);
  DenseGradients g;
  g.dx = matmul_nt(dy, cache.params->weight);
  g.dw = matmul_tn(cache.x, dy);
  if (cache.params->bias) g.db = column_sum(dy);
  return g;
}

ForwardResult<BasisCache> basis_dense_forward(const Matrix& x, const DenseParams& params,
                                              const BasisOptions& options, std::uint64_t seed) {
  check_dense_input("basis_dense_forward", x, params);
  if (options.rank == 0) throw ContractError("basis_dense_forward: rank must be positive");
  if (!(options.lambda >= 0 && options.lambda < 1)) {
    throw ContractError("basis_dense_forward: lambda must lie in [0, 1)");
  }
  ForwardResult<BasisCache> out;
  out.y = dense_output(x, params);
  out.cache.plan = build_plan(x.rows(), options.rank, seed);
  out.cache.x_hat = sketch_tensor(x, out.cache.plan, options.epsilon, options.scaling);
  out.cache.lambda = options.lambda;
  out.cache.scaling = options.scaling;
  out.cache.params = &params;
  return out;
}

DenseGradients basis_dense_backward(const Matrix& dy, const BasisCache& cache) {
  check_upstream("basis_dense_backward", dy, cache.plan.batch_card, cache.params);
  DenseGradients g;
  g.dx = matmul_nt(dy, cache.params->weight);

  SketchedTensor dy_hat = sketch_tensor(dy, cache.plan, cache.x_hat.epsilon, cache.scaling);
  if (cache.lambda > 0) {
    const Real keep = Real(1) - cache.lambda;
    Matrix x_hat = scale(cache.x_hat.values, keep);
    scale_inplace(dy_hat.values, keep);
    g.dw = matmul_tn(x_hat, dy_hat.values);
  } else {
    g.dw = matmul_tn(cache.x_hat.values, dy_hat.values);
  }
  if (cache.params->bias) g.db = column_sum(dy);
  return g;
}

// ---------------------------------------------------------------------------

ForwardResult<ReluCache> relu_forward(const Matrix& x) {
  ForwardResult<ReluCache> out{x, ReluCache{std::vector<std::uint8_t>(x.size()), x.rows(), x.cols()}};
  auto yv = out.y.values();
  for (std::size_t i = 0; i < yv.size(); ++i) {
    const bool pos = yv[i] > 0;
    out.cache.positive[i] = pos ? 1 : 0;
    if (!pos) yv[i] = 0;
  }
  return out;
}

Matrix relu_backward(const Matrix& dy, const ReluCache& cache) {
  if (dy.rows() != cache.rows || dy.cols() != cache.cols) {
    throw ContractError("relu_backward: gradient shape " + shape_string(dy) + " does not match cache");
  }
  Matrix dx = dy;
  auto v = dx.values();
  for (std::size_t i = 0; i < v.size(); ++i)
    if (!cache.positive[i]) v[i] = 0;
  return dx;
}

Real gelu(Real x) { return Real(0.5) * x * (Real(1) + std::erf(x / std::numbers::sqrt2_v<Real>)); }

Real gelu_derivative(Real x) {
  const Real cdf = Real(0.5) * (Real(1) + std::erf(x / std::numbers::sqrt2_v<Real>));
  const Real pdf = std::exp(Real(-0.5) * x * x) * std::numbers::inv_sqrtpi_v<Real> /
                   std::numbers::sqrt2_v<Real>;
  return cdf + x * pdf;
}

ForwardResult<GeluCache> gelu_forward(const Matrix& x) {
  ForwardResult<GeluCache> out{x, GeluCache{x}};
  for (Real& v : out.y.values()) v = gelu(v);
  return out;
}

Matrix gelu_backward(const Matrix& dy, const GeluCache& cache) {
  if (dy.rows() != cache.x.rows() || dy.cols() != cache.x.cols()) {
    throw ContractError("gelu_backward: gradient shape " + shape_string(dy) + " does not match cache");
  }
  Matrix dx = dy;
  auto dv = dx.values();
  auto xv = cache.x.values();
  for (std::size_t i = 0; i < dv.size(); ++i) dv[i] *= gelu_derivative(xv[i]);
  return dx;
}

// ---------------------------------------------------------------------------

ForwardResult<LayerNormCache> layernorm_forward(const Matrix& x, const Matrix& scale,
                                                const Matrix& shift) {
  const std::size_t n = x.cols();
  if (scale.rows() != 1 || scale.cols() != n || shift.rows() != 1 || shift.cols() != n) {
    throw ContractError("layernorm_forward: affine parameters must be 1x" + std::to_string(n));
  }
  ForwardResult<LayerNormCache> out;
  out.y = Matrix(x.rows(), n);
  out.cache.normalized = Matrix(x.rows(), n);
  out.cache.inv_std.resize(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto xr = x.row(i);
    double mean = 0;
    for (Real v : xr) mean += v;
    mean /= double(n);
    double var = 0;
    for (Real v : xr) var += (v - mean) * (v - mean);
    var /= double(n);
    const Real inv_std = static_cast<Real>(1.0 / std::sqrt(var + kLayerNormEpsilon));
    out.cache.inv_std[i] = inv_std;
    auto nr = out.cache.normalized.row(i);
    auto yr = out.y.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      nr[j] = static_cast<Real>((xr[j] - mean) * inv_std);
      yr[j] = nr[j] * scale(0, j) + shift(0, j);
    }
  }
  return out;
}

LayerNormGradients layernorm_backward(const Matrix& dy, const LayerNormCache& cache,
                                      const Matrix& scale) {
  const Matrix& xhat = cache.normalized;
  if (dy.rows() != xhat.rows() || dy.cols() != xhat.cols()) {
    throw ContractError("layernorm_backward: gradient shape " + shape_string(dy) +
                        " does not match cache " + shape_string(xhat));
  }
  const std::size_t n = xhat.cols();
  LayerNormGradients g{Matrix(dy.rows(), n), Matrix(1, n), Matrix(1, n)};
  std::vector<Real> dxhat(n);
  for (std::size_t i = 0; i < dy.rows(); ++i) {
    auto dyr = dy.row(i);
    auto xr = xhat.row(i);
    double mean_d = 0, mean_dx = 0;
    for (std::size_t j = 0; j < n; ++j) {
      g.dscale(0, j) += dyr[j] * xr[j];
      g.dshift(0, j) += dyr[j];
      dxhat[j] = dyr[j] * scale(0, j);
      mean_d += dxhat[j];
      mean_dx += dxhat[j] * xr[j];
    }
    mean_d /= double(n);
    mean_dx /= double(n);
    auto dxr = g.dx.row(i);
    for (std::size_t j = 0; j < n; ++j) {
      dxr[j] = static_cast<Real>(cache.inv_std[i] * (dxhat[j] - mean_d - xr[j] * mean_dx));
    }
  }
  return g;
}

// ---------------------------------------------------------------------------

Matrix embedding_forward(std::span<const std::int32_t> ids, const Matrix& table) {
  Matrix out(ids.size(), table.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || std::size_t(ids[i]) >= table.rows()) {
      throw ContractError("embedding_forward: token id " + std::to_string(ids[i]) +
                          " outside vocabulary of " + std::to_string(table.rows()));
    }
    std::ranges::copy(table.row(std::size_t(ids[i])), out.row(i).begin());
  }
  return out;
}

Matrix embedding_backward(std::span<const std::int32_t> ids, const Matrix& dy,
                          std::size_t vocab_size) {
  if (dy.rows() != ids.size()) {
    throw ContractError("embedding_backward: " + std::to_string(ids.size()) + " ids but gradient " +
                        shape_string(dy));
  }
  Matrix grad(vocab_size, dy.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || std::size_t(ids[i]) >= vocab_size) {
      throw ContractError("embedding_backward: token id out of range");
    }
    auto g = grad.row(std::size_t(ids[i]));
    auto d = dy.row(i);
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += d[j];
  }
  return grad;
}

// ---------------------------------------------------------------------------

LossResult softmax_cross_entropy(const Matrix& logits, std::span<const std::int32_t> targets) {
  if (targets.size() != logits.rows()) {
    throw ContractError("softmax_cross_entropy: " + std::to_string(targets.size()) +
                        " targets for logits " + shape_string(logits));
  }
  LossResult out{0.0, Matrix(logits.rows(), logits.cols())};
  const double inv_rows = 1.0 / double(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const auto t = targets[i];
    if (t < 0 || std::size_t(t) >= logits.cols()) {
      throw ContractError("softmax_cross_entropy: target id " + std::to_string(t) + " out of range");
    }
    auto row = logits.row(i);
    const double peak = *std::ranges::max_element(row);
    double denom = 0;
    for (Real v : row) denom += std::exp(double(v) - peak);
    const double log_denom = std::log(denom);
    out.loss += (log_denom - (double(row[std::size_t(t)]) - peak)) * inv_rows;
    auto d = out.dlogits.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      d[j] = static_cast<Real>(std::exp(double(row[j]) - peak - log_denom) * inv_rows);
    }
    d[std::size_t(t)] -= static_cast<Real>(inv_rows);
  }
  return out;
}

LossResult mean_squared_error(const Matrix& y, const Matrix& target) {
  if (y.rows() != target.rows() || y.cols() != target.cols()) {
    throw ContractError("mean_squared_error: " + shape_string(y) + " vs " + shape_string(target));
  }
  LossResult out{0.0, Matrix(y.rows(), y.cols())};
  const double inv = 1.0 / double(y.size());
  auto yv = y.values();
  auto tv = target.values();
  auto dv = out.dlogits.values();
  for (std::size_t i = 0; i < yv.size(); ++i) {
    const double diff = double(yv[i]) - double(tv[i]);
    out.loss += diff * diff * inv;
    dv[i] = static_cast<Real>(2.0 * diff * inv);
  }
  return out;
}

}  // namespace basis
