#include <doctest.h>

#include <cmath>

#include "basis/data.hpp"
#include "basis/diagnostics.hpp"

using namespace basis;

namespace {

TokenBatch tokens(std::size_t batch, std::size_t t, std::size_t vocab) {
  TokenBatch b{batch, t, {}, {}};
  for (std::size_t i = 0; i < batch * t; ++i) {
    b.inputs.push_back(std::int32_t(i % vocab));
    b.targets.push_back(std::int32_t((i * 7 + 1) % vocab));
  }
  return b;
}

ModelConfig two_layer_mlp(DenseMode mode, std::size_t rank) {
  ModelConfig c;
  c.kind = ModelKind::mlp;
  c.vocab_size = 64;
  c.d_model = 64;
  c.mlp_hidden = 64;
  c.seq_len = 64;
  c.dense.mode = mode;
  c.dense.basis.rank = rank;
  return c;
}

}  // namespace

TEST_SUITE("diagnostics") {

TEST_CASE("expected projector") {
  const auto one = estimate_sts_mean(8, 4, 1, 3);
  CHECK(one.diagonal_exact);
  for (std::size_t i = 0; i < 8; ++i) CHECK(one.mean(i, i) == 1);

  const auto full = estimate_sts_mean(8, 8, 200, 4);
  CHECK(full.off_diagonal_zero);
  CHECK(full.mean == Matrix::identity(8));

  const auto mc = estimate_sts_mean(8, 4, 20000, 5);
  CHECK(mc.diagonal_exact);
  CHECK_FALSE(mc.off_diagonal_zero);
  CHECK(mc.max_off_diagonal < 4 / std::sqrt(20000.0));
}

TEST_CASE("moment accumulator merge equals a single pass") {
  Rng rng(1);
  std::vector<Matrix> samples;
  for (int i = 0; i < 50; ++i) samples.push_back(random_normal(2, 3, rng));
  MomentAccumulator all(2, 3), left(2, 3), right(2, 3);
  for (int i = 0; i < 50; ++i) {
    all.add(samples[i]);
    (i < 17 ? left : right).add(samples[i]);
  }
  left.merge(right);
  CHECK(left.count() == 50);
  // Two-pass oracle.
  for (std::size_t e = 0; e < 6; ++e) {
    double mean = 0, m2 = 0;
    for (const auto& s : samples) mean += s.values()[e];
    mean /= 50;
    for (const auto& s : samples) m2 += (s.values()[e] - mean) * (s.values()[e] - mean);
    CHECK(left.mean().values()[e] == doctest::Approx(mean).epsilon(1e-12));
    CHECK(left.variance().values()[e] == doctest::Approx(m2 / 49).epsilon(1e-12));
    CHECK(all.variance().values()[e] == doctest::Approx(m2 / 49).epsilon(1e-12));
  }
}

TEST_CASE("hashing variance") {
  Rng rng(2);
  const Matrix x = random_normal(16, 8, rng), dy = random_normal(16, 8, rng);
  const auto full = compare_hashing_variance(x, dy, 16, 200, 9);
  CHECK(full.first.per_entry_variance == 0);
  CHECK(max_abs(full.first.variance) == 0);
  CHECK(full.first.mean == matmul_tn(x, dy));

  const auto zero = compare_hashing_variance(Matrix(16, 8), dy, 4, 200, 9);
  CHECK(zero.first.per_entry_variance == 0);
  CHECK(zero.second.per_entry_variance == 0);

  const auto [balanced, uniform] = compare_hashing_variance(x, dy, 4, 10000, 10);
  CHECK(balanced.hashing == HashingMode::balanced);
  CHECK(uniform.hashing == HashingMode::uniform);
  CHECK(balanced.per_entry_variance <= uniform.per_entry_variance);
  // The raw estimator is unbiased: the Monte Carlo mean sits within a few
  // standard errors of the exact product.
  const Matrix exact = matmul_tn(x, dy);
  for (std::size_t i = 0; i < exact.size(); ++i) {
    const double se = std::sqrt(balanced.variance.values()[i] / 10000.0);
    CHECK(std::abs(balanced.mean.values()[i] - exact.values()[i]) <= 5 * se + 1e-12);
  }
}

TEST_CASE("statistics are reproducible") {
  Rng rng(3);
  const Matrix x = random_normal(12, 4, rng), dy = random_normal(12, 5, rng);
  const auto a = estimate_weight_gradient(x, dy, 3, 500, 77, HashingMode::balanced, ScalingMode::invariant);
  const auto b = estimate_weight_gradient(x, dy, 3, 500, 77, HashingMode::balanced, ScalingMode::invariant);
  CHECK(a.mean == b.mean);
  CHECK(a.variance == b.variance);
}

TEST_CASE("uniform control plan keeps the sign stream") {
  const auto balanced = build_plan(32, 4, 5);
  const auto uniform = build_uniform_plan(32, 4, 5);
  CHECK(balanced.signs == uniform.signs);
  CHECK(uniform.rank == 4);
  for (auto b : uniform.bins) CHECK(b < 4);
}

TEST_CASE("norm invariance") {
  Rng rng(4);
  const Matrix x = random_normal(16, 8, rng);
  const auto full = check_norm_invariance(x, 16, 1);
  CHECK(full.relative_gap <= 1e-8);
  CHECK(full.within_ceiling);
  CHECK(full.identity_holds);

  const auto zero = check_norm_invariance(Matrix(16, 8), 4, 1);
  CHECK(zero.relative_gap == 0);
  CHECK(zero.within_ceiling);

  const Matrix big = random_normal(64, 8, rng);
  const auto r1 = check_norm_invariance(big, 1, 2);
  CHECK(r1.relative_gap == doctest::Approx(1 - r1.raw_norm / (r1.raw_norm + 1e-8)).epsilon(1e-6));
  CHECK(r1.relative_gap <= 1e-6);
}

TEST_CASE("finite differences on a linear model") {
  Rng rng(5);
  LinearRegressor model(4, 3, DenseConfig{}, 6);
  const RegressionBatch batch{random_normal(7, 4, rng), random_normal(7, 3, rng)};
  FdOptions fd;
  fd.tolerance = 1e-7;
  const auto r = finite_difference_check(model, batch, fd);
  CHECK(r.pass());
  CHECK(r.tensors.size() == 1);
  CHECK(r.tensors[0].coords == 12);
}

TEST_CASE("finite differences flag a wrong gradient") {
  // Zero tolerance cannot be met by central differences.
  Rng rng(6);
  MlpRegressor model(3, 4, 2, DenseConfig{}, 1);
  const RegressionBatch batch{random_normal(5, 3, rng), random_normal(5, 2, rng)};
  FdOptions fd;
  fd.tolerance = 0;
  CHECK_FALSE(finite_difference_check(model, batch, fd).pass());
}

TEST_CASE("memory audit of a two dense layer model") {
  const auto batch = tokens(1, 64, 64);
  auto exact = make_model(two_layer_mlp(DenseMode::exact, 1));
  const auto e = memory_audit(*exact, batch);
  CHECK(e.total_activation_floats == 8192);
  CHECK(e.consistent());
  CHECK(e.mode == "exact");
  CHECK(e.index_ints == 0);

  auto r8 = make_model(two_layer_mlp(DenseMode::basis, 8));
  const auto b8 = memory_audit(*r8, batch);
  CHECK(b8.total_activation_floats == 1024);
  CHECK(b8.exact_equivalent_floats() == 8192);
  CHECK(b8.index_ints == 2 * 2 * 64);

  auto r1 = make_model(two_layer_mlp(DenseMode::basis, 1));
  CHECK(memory_audit(*r1, batch).total_activation_floats == 128);
  for (Dense* d : r1->dense_layers()) CHECK_FALSE(d->has_cache());
}

TEST_CASE("memory text is stable") {
  const auto batch = tokens(1, 64, 64);
  auto a = make_model(two_layer_mlp(DenseMode::basis, 8));
  auto b = make_model(two_layer_mlp(DenseMode::basis, 8));
  CHECK(to_text(memory_audit(*a, batch)) == to_text(memory_audit(*b, batch)));
  CHECK(to_text(memory_audit(*a, batch)).find("compression vs exact backprop: 8x") != std::string::npos);
}

}
