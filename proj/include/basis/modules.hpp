#pragma once

// Stateful layer objects: parameters, gradient buffers and the cache of the
// most recent training forward pass.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "basis/layers.hpp"
#include "basis/rng.hpp"

namespace basis {

/// A trainable tensor and its gradient buffer, as seen by the optimizer.
struct ParamRef {
  std::string name;
  Matrix* value = nullptr;
  Matrix* grad = nullptr;
};

enum class DenseMode { exact, basis };

const char* to_string(DenseMode mode);
std::optional<DenseMode> parse_dense_mode(std::string_view text);

struct DenseConfig {
  DenseMode mode = DenseMode::exact;
  BasisOptions basis;
};

struct ForwardContext {
  bool training = false;         // build backward caches
  std::uint64_t plan_seed = 0;   // per-step stream; each dense layer derives its own plan seed
};

class Dense {
 public:
  Dense(std::string name, std::size_t in_features, std::size_t out_features, bool bias);

  void init_normal(Rng& rng, Real stddev);

  Matrix forward(const Matrix& x, const ForwardContext& ctx);
  /// Returns dx and stores the weight (and bias) gradients.
  Matrix backward(const Matrix& dy);

  void set_config(const DenseConfig& config) { config_ = config; }
  const DenseConfig& config() const { return config_; }
  void set_stream_index(std::uint64_t index) { stream_index_ = index; }

  const std::string& name() const { return name_; }
  std::size_t in_features() const { return params_.weight.rows(); }
  std::size_t out_features() const { return params_.weight.cols(); }

  DenseParams& params() { return params_; }
  const DenseParams& params() const { return params_; }
  const Matrix& weight_grad() const { return grad_w_; }

  bool has_cache() const { return !std::holds_alternative<std::monostate>(cache_); }
  std::size_t cached_activation_floats() const;
  std::size_t cached_index_ints() const;
  /// Rank of the cached sketch, or nullopt when the cache holds the full input.
  std::optional<std::size_t> cached_rank() const;
  void clear_cache() { cache_ = std::monostate{}; }

  void collect(std::vector<ParamRef>& out);

 private:
  std::string name_;
  DenseParams params_;
  Matrix grad_w_;
  std::optional<Matrix> grad_b_;
  DenseConfig config_;
  std::uint64_t stream_index_ = 0;
  std::variant<std::monostate, ExactCache, BasisCache> cache_;
};

class LayerNormLayer {
 public:
  LayerNormLayer(std::string name, std::size_t features);
  Matrix forward(const Matrix& x);
  Matrix backward(const Matrix& dy);
  std::size_t cached_floats() const { return cache_.normalized.size() + cache_.inv_std.size(); }
  void collect(std::vector<ParamRef>& out);

  Matrix& scale() { return scale_; }
  Matrix& shift() { return shift_; }

 private:
  std::string name_;
  Matrix scale_, shift_, grad_scale_, grad_shift_;
  LayerNormCache cache_;
};

class EmbeddingLayer {
 public:
  EmbeddingLayer(std::string name, std::size_t vocab, std::size_t features);
  void init_normal(Rng& rng, Real stddev);
  Matrix forward(std::span<const std::int32_t> ids);
  void backward(const Matrix& dy);
  void collect(std::vector<ParamRef>& out);
  const Matrix& table() const { return table_; }

 private:
  std::string name_;
  Matrix table_, grad_;
  std::vector<std::int32_t> ids_;
};

class CausalSelfAttention {
 public:
  CausalSelfAttention(const std::string& prefix, std::size_t d_model, std::size_t n_heads);
  void init_normal(Rng& rng, Real stddev, Real out_stddev);

  Matrix forward(const Matrix& x, std::size_t batch, std::size_t seq_len, const ForwardContext& ctx);
  Matrix backward(const Matrix& dy);

  std::size_t cached_floats() const;
  std::vector<Dense*> dense_layers() { return {&query_, &key_, &value_, &output_}; }
  std::vector<const Dense*> dense_layers() const { return {&query_, &key_, &value_, &output_}; }
  void collect(std::vector<ParamRef>& out);

 private:
  std::size_t n_heads_;
  Dense query_, key_, value_, output_;
  AttentionCache cache_;
};

}  // namespace basis
