#include "basis/modules.hpp"

namespace basis {

const char* to_string(DenseMode mode) { return mode == DenseMode::exact ? "exact" : "basis"; }

std::optional<DenseMode> parse_dense_mode(std::string_view text) {
  if (text == "exact") return DenseMode::exact;
  if (text == "basis") return DenseMode::basis;
  return std::nullopt;
}

// ---------------------------------------------------------------------------

Dense::Dense(std::string name, std::size_t in_features, std::size_t out_features, bool bias)
    : name_(std::move(name)), grad_w_(in_features, out_features) {
  params_.weight = Matrix(in_features, out_features);
  if (bias) {
    params_.bias = Matrix(1, out_features);
    grad_b_ = Matrix(1, out_features);
  }
}

void Dense::init_normal(Rng& rng, Real stddev) {
  for (Real& w : params_.weight.values()) w = static_cast<Real>(rng.normal() * stddev);
  if (params_.bias) params_.bias->fill(0);
}

Matrix Dense::forward(const Matrix& x, const ForwardContext& ctx) {
  if (!ctx.training) {
    // No cache is needed, and the output is the same in both modes.
    cache_ = std::monostate{};
    if (x.cols() != params_.weight.rows()) {
      throw ContractError("Dense " + name_ + ": input " + shape_string(x) + " does not match weight " +
                          shape_string(params_.weight));
    }
    Matrix y = matmul(x, params_.weight);
    if (params_.bias) add_row_inplace(y, *params_.bias);
    return y;
  }
  if (config_.mode == DenseMode::basis) {
    auto result = basis_dense_forward(x, params_, config_.basis,
                                      derive_seed(ctx.plan_seed, {stream_index_}));
    cache_ = std::move(result.cache);
    return std::move(result.y);
  }
  auto result = dense_forward_exact(x, params_);
  cache_ = std::move(result.cache);
  return std::move(result.y);
}

Matrix Dense::backward(const Matrix& dy) {
  DenseGradients g;
  if (auto* exact = std::get_if<ExactCache>(&cache_)) {
    g = dense_backward_exact(dy, *exact);
  } else if (auto* sketched = std::get_if<BasisCache>(&cache_)) {
    g = basis_dense_backward(dy, *sketched);
  } else {
    throw ContractError("Dense " + name_ + ": backward called without a training forward pass");
  }
  grad_w_ = std::move(g.dw);
  if (grad_b_ && g.db) *grad_b_ = std::move(*g.db);
  cache_ = std::monostate{};
  return std::move(g.dx);
}

std::size_t Dense::cached_activation_floats() const {
  if (auto* exact = std::get_if<ExactCache>(&cache_)) return exact->cached_floats();
  if (auto* sketched = std::get_if<BasisCache>(&cache_)) return sketched->cached_floats();
  return 0;
}

std::size_t Dense::cached_index_ints() const {
  if (auto* sketched = std::get_if<BasisCache>(&cache_)) return sketched->cached_index_ints();
  return 0;
}

std::optional<std::size_t> Dense::cached_rank() const {
  if (auto* sketched = std::get_if<BasisCache>(&cache_)) return sketched->plan.rank;
  return std::nullopt;
}

void Dense::collect(std::vector<ParamRef>& out) {
  out.push_back({name_ + ".weight", &params_.weight, &grad_w_});
  if (params_.bias) out.push_back({name_ + ".bias", &*params_.bias, &*grad_b_});
}

// ---------------------------------------------------------------------------

LayerNormLayer::LayerNormLayer(std::string name, std::size_t features)
    : name_(std::move(name)),
      scale_(1, features, Real(1)),
      shift_(1, features),
      grad_scale_(1, features),
      grad_shift_(1, features) {}

Matrix LayerNormLayer::forward(const Matrix& x) {
  auto result = layernorm_forward(x, scale_, shift_);
  cache_ = std::move(result.cache);
  return std::move(result.y);
}

Matrix LayerNormLayer::backward(const Matrix& dy) {
  auto g = layernorm_backward(dy, cache_, scale_);
  grad_scale_ = std::move(g.dscale);
  grad_shift_ = std::move(g.dshift);
  return std::move(g.dx);
}

void LayerNormLayer::collect(std::vector<ParamRef>& out) {
  out.push_back({name_ + ".scale", &scale_, &grad_scale_});
  out.push_back({name_ + ".shift", &shift_, &grad_shift_});
}

// ---------------------------------------------------------------------------

EmbeddingLayer::EmbeddingLayer(std::string name, std::size_t vocab, std::size_t features)
    : name_(std::move(name)), table_(vocab, features), grad_(vocab, features) {}

void EmbeddingLayer::init_normal(Rng& rng, Real stddev) {
  for (Real& w : table_.values()) w = static_cast<Real>(rng.normal() * stddev);
}

Matrix EmbeddingLayer::forward(std::span<const std::int32_t> ids) {
  ids_.assign(ids.begin(), ids.end());
  return embedding_forward(ids, table_);
}

void EmbeddingLayer::backward(const Matrix& dy) { grad_ = embedding_backward(ids_, dy, table_.rows()); }

void EmbeddingLayer::collect(std::vector<ParamRef>& out) {
  out.push_back({name_ + ".table", &table_, &grad_});
}

// ---------------------------------------------------------------------------

CausalSelfAttention::CausalSelfAttention(const std::string& prefix, std::size_t d_model,
                                         std::size_t n_heads)
    : n_heads_(n_heads),
      query_(prefix + ".q", d_model, d_model, true),
      key_(prefix + ".k", d_model, d_model, true),
      value_(prefix + ".v", d_model, d_model, true),
      output_(prefix + ".out", d_model, d_model, true) {
  if (n_heads == 0 || d_model % n_heads != 0) {
    throw ContractError("CausalSelfAttention: d_model " + std::to_string(d_model) +
                        " not divisible by " + std::to_string(n_heads) + " heads");
  }
}

void CausalSelfAttention::init_normal(Rng& rng, Real stddev, Real out_stddev) {
  query_.init_normal(rng, stddev);
  key_.init_normal(rng, stddev);
  value_.init_normal(rng, stddev);
  output_.init_normal(rng, out_stddev);
}

Matrix CausalSelfAttention::forward(const Matrix& x, std::size_t batch, std::size_t seq_len,
                                    const ForwardContext& ctx) {
  Matrix q = query_.forward(x, ctx);
  Matrix k = key_.forward(x, ctx);
  Matrix v = value_.forward(x, ctx);
  auto attended = causal_attention_forward(q, k, v, batch, seq_len, n_heads_);
  cache_ = std::move(attended.cache);
  return output_.forward(attended.y, ctx);
}

Matrix CausalSelfAttention::backward(const Matrix& dy) {
  Matrix dattn = output_.backward(dy);
  auto g = causal_attention_backward(dattn, cache_);
  Matrix dx = query_.backward(g.dq);
  add_inplace(dx, key_.backward(g.dk));
  add_inplace(dx, value_.backward(g.dv));
  return dx;
}

std::size_t CausalSelfAttention::cached_floats() const {
  std::size_t n = cache_.q.size() + cache_.k.size() + cache_.v.size();
  for (const auto& p : cache_.probs) n += p.size();
  return n;
}

void CausalSelfAttention::collect(std::vector<ParamRef>& out) {
  query_.collect(out);
  key_.collect(out);
  value_.collect(out);
  output_.collect(out);
}

}  // namespace basis
