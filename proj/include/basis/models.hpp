#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "basis/modules.hpp"

namespace basis {

struct TokenBatch {
  std::size_t batch = 0;
  std::size_t seq_len = 0;
  std::vector<std::int32_t> inputs;   // batch * seq_len, row-major by sequence
  std::vector<std::int32_t> targets;  // inputs shifted by one position

  std::size_t tokens() const { return batch * seq_len; }
};

struct RegressionBatch {
  Matrix x;
  Matrix target;
};

enum class ModelKind { mlp, transformer };

struct ModelConfig {
  ModelKind kind = ModelKind::transformer;
  std::size_t vocab_size = 0;
  std::size_t d_model = 64;
  std::size_t n_heads = 2;
  std::size_t n_layers = 2;
  std::size_t seq_len = 64;
  std::size_t mlp_hidden = 0;  // 0 selects 4 * d_model (transformer) or d_model (mlp)
  DenseConfig dense;           // applied to every dense layer ...
  std::map<std::string, DenseMode> layer_modes;  // ... unless overridden by name
  std::uint64_t init_seed = 0;

  std::size_t hidden_width() const;
};

/// Common surface of the token-level models used for training.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  /// Mean cross-entropy of the batch. With ctx.training the backward caches
  /// are kept for a following backward().
  virtual double forward(const TokenBatch& batch, const ForwardContext& ctx) = 0;
  virtual void backward() = 0;

  virtual std::vector<ParamRef> parameters() = 0;
  virtual std::vector<Dense*> dense_layers() = 0;
  /// Floats held by non-dense caches (layer norms, attention, activations).
  virtual std::size_t auxiliary_cached_floats() const = 0;
  virtual const ModelConfig& config() const = 0;

 protected:
  void apply_dense_config(const ModelConfig& config);
};

/// GPT-style decoder: token and position embeddings, pre-norm blocks of
/// causal self-attention and a GELU MLP, final layer norm and a linear head.
class Transformer final : public LanguageModel {
 public:
  explicit Transformer(ModelConfig config);

  double forward(const TokenBatch& batch, const ForwardContext& ctx) override;
  void backward() override;
  std::vector<ParamRef> parameters() override;
  std::vector<Dense*> dense_layers() override;
  std::size_t auxiliary_cached_floats() const override;
  const ModelConfig& config() const override { return config_; }

 private:
  struct Block {
    LayerNormLayer ln1;
    CausalSelfAttention attn;
    LayerNormLayer ln2;
    Dense fc1;
    GeluCache gelu;
    Dense fc2;
  };

  ModelConfig config_;
  EmbeddingLayer token_embedding_;
  EmbeddingLayer position_embedding_;
  std::vector<Block> blocks_;
  LayerNormLayer final_norm_;
  Dense head_;
  std::size_t batch_ = 0;
  Matrix dlogits_;
};

/// Context-free next-token model: embedding, one hidden ReLU layer, output layer.
class MlpLanguageModel final : public LanguageModel {
 public:
  explicit MlpLanguageModel(ModelConfig config);

  double forward(const TokenBatch& batch, const ForwardContext& ctx) override;
  void backward() override;
  std::vector<ParamRef> parameters() override;
  std::vector<Dense*> dense_layers() override;
  std::size_t auxiliary_cached_floats() const override;
  const ModelConfig& config() const override { return config_; }

 private:
  ModelConfig config_;
  EmbeddingLayer embedding_;
  Dense fc1_;
  ReluCache relu_;
  Dense fc2_;
  Matrix dlogits_;
};

std::unique_ptr<LanguageModel> make_model(const ModelConfig& config);

// ---------------------------------------------------------------------------
// Regression models on continuous inputs with a mean squared error loss.

/// Single bias-free dense layer.
class LinearRegressor {
 public:
  LinearRegressor(std::size_t in, std::size_t out, const DenseConfig& config, std::uint64_t seed);
  double forward(const RegressionBatch& batch, const ForwardContext& ctx);
  void backward();
  std::vector<ParamRef> parameters();
  std::vector<Dense*> dense_layers() { return {&layer_}; }

 private:
  Dense layer_;
  Matrix dy_;
};

/// dense -> relu -> dense.
class MlpRegressor {
 public:
  MlpRegressor(std::size_t in, std::size_t hidden, std::size_t out, const DenseConfig& config,
               std::uint64_t seed);
  double forward(const RegressionBatch& batch, const ForwardContext& ctx);
  void backward();
  std::vector<ParamRef> parameters();
  std::vector<Dense*> dense_layers() { return {&fc1_, &fc2_}; }

 private:
  Dense fc1_;
  ReluCache relu_;
  Dense fc2_;
  Matrix dy_;
};

}  // namespace basis
