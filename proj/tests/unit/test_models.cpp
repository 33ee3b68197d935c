#include <doctest.h>

#include "basis/data.hpp"
#include "basis/diagnostics.hpp"
#include "basis/errors.hpp"
#include "basis/models.hpp"

using namespace basis;

namespace {

TokenBatch random_batch(std::size_t batch, std::size_t t, std::size_t vocab, std::uint64_t seed) {
  Rng rng(seed);
  TokenBatch b{batch, t, {}, {}};
  for (std::size_t i = 0; i < batch * t; ++i) {
    b.inputs.push_back(std::int32_t(rng.below(vocab)));
    b.targets.push_back(std::int32_t(rng.below(vocab)));
  }
  return b;
}

ModelConfig tiny_transformer(DenseMode mode, std::size_t rank = 1) {
  ModelConfig c;
  c.vocab_size = 13;
  c.d_model = 8;
  c.n_heads = 2;
  c.n_layers = 2;
  c.seq_len = 6;
  c.dense.mode = mode;
  c.dense.basis.rank = rank;
  c.init_seed = 42;
  return c;
}

}  // namespace

TEST_SUITE("models") {

TEST_CASE("transformer dense layer inventory") {
  Transformer model(tiny_transformer(DenseMode::exact));
  const auto layers = model.dense_layers();
  REQUIRE(layers.size() == 13);
  CHECK(layers[0]->name() == "blocks.0.attn.q");
  CHECK(layers[4]->name() == "blocks.0.mlp.fc1");
  CHECK(layers[4]->out_features() == 32);
  CHECK(layers[5]->in_features() == 32);
  CHECK(layers[12]->name() == "lm_head");
  CHECK(layers[12]->out_features() == 13);
}

TEST_CASE("switching dense modes leaves the forward pass unchanged") {
  const auto batch = random_batch(2, 6, 13, 1);
  Transformer exact(tiny_transformer(DenseMode::exact));
  const double reference = exact.forward(batch, ForwardContext{true, 5});
  for (std::size_t r : {1, 3, 12}) {
    Transformer sketched(tiny_transformer(DenseMode::basis, r));
    CHECK(sketched.forward(batch, ForwardContext{true, 5}) == reference);
    CHECK(sketched.forward(batch, ForwardContext{false, 0}) == reference);
  }
}

TEST_CASE("per-layer overrides") {
  auto c = tiny_transformer(DenseMode::exact, 4);
  c.layer_modes["lm_head"] = DenseMode::basis;
  Transformer model(c);
  for (Dense* d : model.dense_layers()) {
    CHECK(d->config().mode == (d->name() == "lm_head" ? DenseMode::basis : DenseMode::exact));
  }
  c.layer_modes["blocks.9.attn.q"] = DenseMode::basis;
  CHECK_THROWS_AS(Transformer{c}, ConfigError);
}

TEST_CASE("evaluation forward keeps no dense caches") {
  Transformer model(tiny_transformer(DenseMode::basis, 3));
  model.forward(random_batch(1, 6, 13, 2), ForwardContext{false, 0});
  for (Dense* d : model.dense_layers()) CHECK_FALSE(d->has_cache());
  model.forward(random_batch(1, 6, 13, 2), ForwardContext{true, 0});
  for (Dense* d : model.dense_layers()) CHECK(d->cached_rank() == 3);
}

TEST_CASE("tiny transformer gradients match finite differences") {
  Transformer model(tiny_transformer(DenseMode::exact));
  FdOptions fd;
  fd.tolerance = 1e-3;
  fd.seed = 3;
  const auto report = finite_difference_check(model, random_batch(2, 6, 13, 4), fd);
  CHECK(report.tensors.size() == model.parameters().size());
  CHECK(report.pass());
}

TEST_CASE("transformer with R = B passes finite differences") {
  Transformer model(tiny_transformer(DenseMode::basis, 12));
  FdOptions fd;
  fd.tolerance = 1e-3;
  fd.seed = 5;
  fd.plan_seed = 17;
  CHECK(finite_difference_check(model, random_batch(2, 6, 13, 6), fd).pass());
}

TEST_CASE("mlp language model gradients match finite differences") {
  ModelConfig c;
  c.kind = ModelKind::mlp;
  c.vocab_size = 9;
  c.d_model = 6;
  c.mlp_hidden = 7;
  c.seq_len = 4;
  c.init_seed = 8;
  auto model = make_model(c);
  FdOptions fd;
  fd.seed = 1;
  CHECK(finite_difference_check(*model, random_batch(2, 4, 9, 9), fd).pass());
}

TEST_CASE("initial loss is close to ln V") {
  auto c = tiny_transformer(DenseMode::exact);
  c.vocab_size = 50;
  Transformer model(c);
  const double loss = model.forward(random_batch(4, 6, 50, 10), ForwardContext{false, 0});
  CHECK(loss == doctest::Approx(std::log(50.0)).epsilon(0.02));
}

TEST_CASE("regressors") {
  Rng rng(11);
  const RegressionBatch batch{random_normal(5, 4, rng), random_normal(5, 2, rng)};
  LinearRegressor lin(4, 2, DenseConfig{}, 3);
  FdOptions fd;
  fd.tolerance = 1e-7;
  CHECK(finite_difference_check(lin, batch, fd).pass());
  MlpRegressor mlp(4, 6, 2, DenseConfig{}, 4);
  fd.tolerance = 1e-4;
  CHECK(finite_difference_check(mlp, batch, fd).pass());
  MlpRegressor sketched(4, 6, 2, DenseConfig{DenseMode::basis, BasisOptions{5}}, 4);
  fd.tolerance = 1e-3;
  fd.plan_seed = 2;
  CHECK(finite_difference_check(sketched, batch, fd).pass());
}

}
