#include "basis/sketch.hpp"

#include <algorithm>

#include "basis/rng.hpp"

namespace basis {

namespace {
constexpr std::uint64_t kBinStream = 1;
constexpr std::uint64_t kSignStream = 2;
}  // namespace

std::vector<std::uint32_t> balanced_assignment(std::size_t batch_card, std::size_t rank,
                                               std::uint64_t seed) {
  if (batch_card == 0 || rank == 0) {
    throw ContractError("balanced_assignment: batch_card and rank must be positive");
  }
  std::vector<std::uint32_t> bins(batch_card);
  for (std::size_t b = 0; b < batch_card; ++b) bins[b] = static_cast<std::uint32_t>(b % rank);
  Rng rng(seed);
  rng.shuffle(std::span<std::uint32_t>(bins));
  return bins;
}

std::vector<std::int8_t> rademacher_signs(std::size_t batch_card, std::uint64_t seed) {
  if (batch_card == 0) throw ContractError("rademacher_signs: batch_card must be positive");
  std::vector<std::int8_t> signs(batch_card);
  Rng rng(seed);
  for (auto& s : signs) s = (rng() >> 63) ? std::int8_t(1) : std::int8_t(-1);
  return signs;
}

SketchPlan build_plan(std::size_t batch_card, std::size_t rank, std::uint64_t seed) {
  if (batch_card == 0 || rank == 0) {
    throw ContractError("build_plan: batch_card and rank must be positive");
  }
  SketchPlan plan;
  plan.batch_card = batch_card;
  plan.rank = std::min(rank, batch_card);
  plan.seed = seed;
  plan.bins = balanced_assignment(batch_card, plan.rank, derive_seed(seed, {kBinStream}));
  plan.signs = rademacher_signs(batch_card, derive_seed(seed, {kSignStream}));
  return plan;
}

Matrix apply_sketch(const Matrix& x, const SketchPlan& plan) {
  if (x.rows() != plan.batch_card) {
    throw ContractError("apply_sketch: input has " + std::to_string(x.rows()) +
                        " rows but plan covers " + std::to_string(plan.batch_card));
  }
  return signed_segment_sum(x, plan.bins, plan.signs, plan.rank);
}

SketchedTensor invariant_scale(Real x_norm, Matrix raw_sketch, Real epsilon) {
  if (!(epsilon > 0)) throw ContractError("invariant_scale: epsilon must be positive");
  if (x_norm < 0) throw ContractError("invariant_scale: negative source norm");
  SketchedTensor out;
  out.source_norm = x_norm;
  out.epsilon = epsilon;
  if (x_norm == 0) {
    raw_sketch.fill(0);
    out.gamma = 0;
    out.values = std::move(raw_sketch);
    return out;
  }
  out.gamma = x_norm / (frobenius_norm(raw_sketch) + epsilon);
  scale_inplace(raw_sketch, out.gamma);
  out.values = std::move(raw_sketch);
  return out;
}

SketchedTensor sketch_tensor(const Matrix& x, const SketchPlan& plan, Real epsilon,
                             ScalingMode scaling) {
  Matrix raw = apply_sketch(x, plan);
  if (scaling == ScalingMode::raw) {
    SketchedTensor out;
    out.values = std::move(raw);
    out.gamma = 1;
    out.source_norm = frobenius_norm(x);
    out.epsilon = epsilon;
    return out;
  }
  return invariant_scale(frobenius_norm(x), std::move(raw), epsilon);
}

Matrix projection_matrix(const SketchPlan& plan) {
  Matrix s(plan.rank, plan.batch_card);
  for (std::size_t b = 0; b < plan.batch_card; ++b) s(plan.bins[b], b) = Real(plan.signs[b]);
  return s;
}

}  // namespace basis
