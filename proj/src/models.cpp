#include "basis/models.hpp"

#include <cmath>
#include <set>

namespace basis {

namespace {

constexpr Real kInitStd = Real(0.02);

void check_batch(const TokenBatch& batch, const ModelConfig& config) {
  if (batch.tokens() == 0 || batch.inputs.size() != batch.tokens() ||
      batch.targets.size() != batch.tokens()) {
    throw ContractError("token batch has inconsistent sizes");
  }
  if (batch.seq_len > config.seq_len) {
    throw ContractError("sequence length " + std::to_string(batch.seq_len) +
                        " exceeds model context " + std::to_string(config.seq_len));
  }
}

}  // namespace

std::size_t ModelConfig::hidden_width() const {
  if (mlp_hidden != 0) return mlp_hidden;
  return kind == ModelKind::transformer ? 4 * d_model : d_model;
}

void LanguageModel::apply_dense_config(const ModelConfig& config) {
  auto layers = dense_layers();
  std::set<std::string> names;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    Dense* layer = layers[i];
    names.insert(layer->name());
    DenseConfig dc = config.dense;
    if (auto it = config.layer_modes.find(layer->name()); it != config.layer_modes.end()) {
      dc.mode = it->second;
    }
    layer->set_config(dc);
    layer->set_stream_index(i);
  }
  for (const auto& [name, mode] : config.layer_modes) {
    if (!names.contains(name)) throw ConfigError("unknown layer in mode override: " + name);
  }
}

// ---------------------------------------------------------------------------

Transformer::Transformer(ModelConfig config)
    : config_(std::move(config)),
      token_embedding_("token_embedding", config_.vocab_size, config_.d_model),
      position_embedding_("position_embedding", config_.seq_len, config_.d_model),
      final_norm_("final_norm", config_.d_model),
      head_("lm_head", config_.d_model, config_.vocab_size, true) {
  if (config_.vocab_size == 0 || config_.d_model == 0 || config_.seq_len == 0) {
    throw ConfigError("transformer needs positive vocab_size, d_model and seq_len");
  }
  Rng rng(derive_seed(config_.init_seed, {0x1417}));
  // Residual output projections are scaled down with depth, as in GPT-2.
  const Real out_std = kInitStd / std::sqrt(Real(2 * std::max<std::size_t>(1, config_.n_layers)));
  token_embedding_.init_normal(rng, kInitStd);
  position_embedding_.init_normal(rng, kInitStd);
  const std::size_t hidden = config_.hidden_width();
  blocks_.reserve(config_.n_layers);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    const std::string p = "blocks." + std::to_string(l);
    blocks_.push_back(Block{LayerNormLayer(p + ".ln1", config_.d_model),
                            CausalSelfAttention(p + ".attn", config_.d_model, config_.n_heads),
                            LayerNormLayer(p + ".ln2", config_.d_model),
                            Dense(p + ".mlp.fc1", config_.d_model, hidden, true),
                            GeluCache{},
                            Dense(p + ".mlp.fc2", hidden, config_.d_model, true)});
    Block& b = blocks_.back();
    b.attn.init_normal(rng, kInitStd, out_std);
    b.fc1.init_normal(rng, kInitStd);
    b.fc2.init_normal(rng, out_std);
  }
  head_.init_normal(rng, kInitStd);
  apply_dense_config(config_);
}

double Transformer::forward(const TokenBatch& batch, const ForwardContext& ctx) {
  check_batch(batch, config_);
  batch_ = batch.batch;
  std::vector<std::int32_t> positions(batch.tokens());
  for (std::size_t i = 0; i < positions.size(); ++i)
    positions[i] = static_cast<std::int32_t>(i % batch.seq_len);

  Matrix x = token_embedding_.forward(batch.inputs);
  add_inplace(x, position_embedding_.forward(positions));
  for (Block& b : blocks_) {
    add_inplace(x, b.attn.forward(b.ln1.forward(x), batch.batch, batch.seq_len, ctx));
    auto act = gelu_forward(b.fc1.forward(b.ln2.forward(x), ctx));
    b.gelu = std::move(act.cache);
    add_inplace(x, b.fc2.forward(act.y, ctx));
  }
  Matrix logits = head_.forward(final_norm_.forward(x), ctx);
  auto loss = softmax_cross_entropy(logits, batch.targets);
  dlogits_ = std::move(loss.dlogits);
  return loss.loss;
}

void Transformer::backward() {
  Matrix dx = final_norm_.backward(head_.backward(dlogits_));
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) {
    Block& b = *it;
    Matrix dh = b.fc1.backward(gelu_backward(b.fc2.backward(dx), b.gelu));
    add_inplace(dx, b.ln2.backward(dh));
    add_inplace(dx, b.ln1.backward(b.attn.backward(dx)));
  }
  token_embedding_.backward(dx);
  position_embedding_.backward(dx);
}

std::vector<ParamRef> Transformer::parameters() {
  std::vector<ParamRef> out;
  token_embedding_.collect(out);
  position_embedding_.collect(out);
  for (Block& b : blocks_) {
    b.ln1.collect(out);
    b.attn.collect(out);
    b.ln2.collect(out);
    b.fc1.collect(out);
    b.fc2.collect(out);
  }
  final_norm_.collect(out);
  head_.collect(out);
  return out;
}

std::vector<Dense*> Transformer::dense_layers() {
  std::vector<Dense*> out;
  for (Block& b : blocks_) {
    for (Dense* d : b.attn.dense_layers()) out.push_back(d);
    out.push_back(&b.fc1);
    out.push_back(&b.fc2);
  }
  out.push_back(&head_);
  return out;
}

std::size_t Transformer::auxiliary_cached_floats() const {
  std::size_t n = final_norm_.cached_floats();
  for (const Block& b : blocks_) {
    n += b.ln1.cached_floats() + b.ln2.cached_floats() + b.attn.cached_floats() + b.gelu.x.size();
  }
  return n;
}

// ---------------------------------------------------------------------------

MlpLanguageModel::MlpLanguageModel(ModelConfig config)
    : config_(std::move(config)),
      embedding_("token_embedding", config_.vocab_size, config_.d_model),
      fc1_("fc1", config_.d_model, config_.hidden_width(), true),
      fc2_("fc2", config_.hidden_width(), config_.vocab_size, true) {
  if (config_.vocab_size == 0 || config_.d_model == 0) {
    throw ConfigError("mlp model needs positive vocab_size and d_model");
  }
  Rng rng(derive_seed(config_.init_seed, {0x1417}));
  embedding_.init_normal(rng, Real(1) / std::sqrt(Real(config_.d_model)));
  fc1_.init_normal(rng, Real(1) / std::sqrt(Real(config_.d_model)));
  fc2_.init_normal(rng, Real(1) / std::sqrt(Real(config_.hidden_width())));
  apply_dense_config(config_);
}

double MlpLanguageModel::forward(const TokenBatch& batch, const ForwardContext& ctx) {
  check_batch(batch, config_);
  auto act = relu_forward(fc1_.forward(embedding_.forward(batch.inputs), ctx));
  relu_ = std::move(act.cache);
  auto loss = softmax_cross_entropy(fc2_.forward(act.y, ctx), batch.targets);
  dlogits_ = std::move(loss.dlogits);
  return loss.loss;
}

void MlpLanguageModel::backward() {
  embedding_.backward(fc1_.backward(relu_backward(fc2_.backward(dlogits_), relu_)));
}

std::vector<ParamRef> MlpLanguageModel::parameters() {
  std::vector<ParamRef> out;
  embedding_.collect(out);
  fc1_.collect(out);
  fc2_.collect(out);
  return out;
}

std::vector<Dense*> MlpLanguageModel::dense_layers() { return {&fc1_, &fc2_}; }

std::size_t MlpLanguageModel::auxiliary_cached_floats() const { return relu_.positive.size(); }

std::unique_ptr<LanguageModel> make_model(const ModelConfig& config) {
  if (config.kind == ModelKind::mlp) return std::make_unique<MlpLanguageModel>(config);
  return std::make_unique<Transformer>(config);
}

// ---------------------------------------------------------------------------

LinearRegressor::LinearRegressor(std::size_t in, std::size_t out, const DenseConfig& config,
                                 std::uint64_t seed)
    : layer_("linear", in, out, false) {
  Rng rng(seed);
  layer_.init_normal(rng, Real(1) / std::sqrt(Real(in)));
  layer_.set_config(config);
}

double LinearRegressor::forward(const RegressionBatch& batch, const ForwardContext& ctx) {
  auto loss = mean_squared_error(layer_.forward(batch.x, ctx), batch.target);
  dy_ = std::move(loss.dlogits);
  return loss.loss;
}

void LinearRegressor::backward() { layer_.backward(dy_); }

std::vector<ParamRef> LinearRegressor::parameters() {
  std::vector<ParamRef> out;
  layer_.collect(out);
  return out;
}

MlpRegressor::MlpRegressor(std::size_t in, std::size_t hidden, std::size_t out,
                           const DenseConfig& config, std::uint64_t seed)
    : fc1_("fc1", in, hidden, true), fc2_("fc2", hidden, out, true) {
  Rng rng(seed);
  fc1_.init_normal(rng, Real(1) / std::sqrt(Real(in)));
  fc2_.init_normal(rng, Real(1) / std::sqrt(Real(hidden)));
  // Nonzero biases so the check also covers the bias gradient path.
  for (Real& b : fc1_.params().bias->values()) b = static_cast<Real>(0.1 * rng.normal());
  for (Real& b : fc2_.params().bias->values()) b = static_cast<Real>(0.1 * rng.normal());
  fc1_.set_config(config);
  fc2_.set_config(config);
  fc1_.set_stream_index(0);
  fc2_.set_stream_index(1);
}

double MlpRegressor::forward(const RegressionBatch& batch, const ForwardContext& ctx) {
  auto act = relu_forward(fc1_.forward(batch.x, ctx));
  relu_ = std::move(act.cache);
  auto loss = mean_squared_error(fc2_.forward(act.y, ctx), batch.target);
  dy_ = std::move(loss.dlogits);
  return loss.loss;
}

void MlpRegressor::backward() { fc1_.backward(relu_backward(fc2_.backward(dy_), relu_)); }

std::vector<ParamRef> MlpRegressor::parameters() {
  std::vector<ParamRef> out;
  fc1_.collect(out);
  fc2_.collect(out);
  return out;
}

}  // namespace basis
