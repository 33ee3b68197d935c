#pragma once

// Balanced count-sketch with invariant norm scalars.
//
// A plan realizes the R x B projection S with S[r, b] = signs[b] * [bins[b] == r].
// Bin assignments are a uniformly random permutation of (b mod R), so every
// bin holds floor(B/R) or ceil(B/R) rows. Sketches are rescaled so their
// Frobenius norm matches the source up to the epsilon in the denominator.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "basis/tensor.hpp"

namespace basis {

inline constexpr Real kDefaultEpsilon = Real(1e-8);

struct SketchPlan {
  std::size_t batch_card = 0;  // B, the flattened token count
  std::size_t rank = 0;        // min(requested rank, B)
  std::vector<std::uint32_t> bins;
  std::vector<std::int8_t> signs;
  std::uint64_t seed = 0;

  bool operator==(const SketchPlan&) const = default;
};

struct SketchedTensor {
  Matrix values;  // rank x N, already multiplied by gamma
  Real gamma = 0;
  Real source_norm = 0;
  Real epsilon = kDefaultEpsilon;
};

// Selects whether the norm correction is applied. `raw` keeps gamma = 1 and
// exists so the unbiased estimator can be studied in isolation; training
// code always uses `invariant`.
enum class ScalingMode { invariant, raw };

std::vector<std::uint32_t> balanced_assignment(std::size_t batch_card, std::size_t rank,
                                               std::uint64_t seed);
std::vector<std::int8_t> rademacher_signs(std::size_t batch_card, std::uint64_t seed);

/// Builds a plan with rank clamped to the batch cardinality. Bins and signs
/// are drawn from independent streams derived from `seed`.
SketchPlan build_plan(std::size_t batch_card, std::size_t rank, std::uint64_t seed);

/// Computes S x for the plan's S via a signed segment sum.
Matrix apply_sketch(const Matrix& x, const SketchPlan& plan);

/// gamma = x_norm / (||raw||_F + epsilon); values = gamma * raw. A zero
/// source norm yields gamma = 0 and zero values.
SketchedTensor invariant_scale(Real x_norm, Matrix raw_sketch, Real epsilon = kDefaultEpsilon);

/// Sketches x with the plan and applies the requested scaling.
SketchedTensor sketch_tensor(const Matrix& x, const SketchPlan& plan, Real epsilon,
                             ScalingMode scaling = ScalingMode::invariant);

/// Materializes S as a dense rank x B matrix. Used by diagnostics.
Matrix projection_matrix(const SketchPlan& plan);

}  // namespace basis
