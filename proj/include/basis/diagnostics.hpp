#pragma once

// Empirical checks of the estimator's properties: the expected projector,
// collision variance under balanced vs. uniform hashing, norm preservation,
// finite-difference gradient checks and activation-memory accounting.
//
// Monte Carlo trials run in fixed chunks; chunk results are merged in chunk
// order, so every statistic is bitwise reproducible for any thread count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "basis/models.hpp"
#include "basis/rng.hpp"
#include "basis/sketch.hpp"

namespace basis {

enum class HashingMode { balanced, uniform };
const char* to_string(HashingMode mode);
const char* to_string(ScalingMode mode);

/// Independent uniform bin draws; the high-variance control arm.
std::vector<std::uint32_t> uniform_assignment(std::size_t batch_card, std::size_t rank,
                                              std::uint64_t seed);
/// Same signs and rank as build_plan(batch_card, rank, seed), uniform bins.
SketchPlan build_uniform_plan(std::size_t batch_card, std::size_t rank, std::uint64_t seed);

/// x_sketch^T dy_sketch with both sketches taken under one plan. Bins are
/// relabelled in order of their first member before summing; the value is
/// unchanged mathematically, and when every bin is a singleton the
/// accumulation order matches the exact product so the result is bitwise
/// equal to x^T dy.
Matrix sketched_weight_gradient(const Matrix& x, const Matrix& dy, const SketchPlan& plan,
                                ScalingMode scaling, Real epsilon = kDefaultEpsilon);

/// Running per-entry mean and M2 (Welford), mergeable with Chan's update.
class MomentAccumulator {
 public:
  MomentAccumulator(std::size_t rows, std::size_t cols) : mean_(rows, cols), m2_(rows, cols) {}
  void add(const Matrix& sample);
  void merge(const MomentAccumulator& other);
  std::size_t count() const { return count_; }
  const Matrix& mean() const { return mean_; }
  /// Unbiased sample variance per entry (zero when count < 2).
  Matrix variance() const;

 private:
  std::size_t count_ = 0;
  Matrix mean_, m2_;
};

struct EstimatorStats {
  double mean_abs_bias = 0;       // mean over entries of |E_hat[dW_hat] - dW|
  double per_entry_variance = 0;  // mean over entries of the sample variance
  std::size_t trials = 0;
  HashingMode hashing = HashingMode::balanced;
  ScalingMode scaling = ScalingMode::raw;
  Matrix mean;
  Matrix variance;
};

struct StsEstimate {
  Matrix mean;                  // B x B average of S^T S
  bool diagonal_exact = true;   // every trial had a diagonal of exactly one
  bool off_diagonal_zero = true;  // every trial had an exactly zero off-diagonal
  double max_off_diagonal = 0;  // of the mean
  std::size_t trials = 0;
};

StsEstimate estimate_sts_mean(std::size_t batch_card, std::size_t rank, std::size_t trials,
                              std::uint64_t seed);

/// Statistics of the sketched weight gradient over independent plans.
EstimatorStats estimate_weight_gradient(const Matrix& x, const Matrix& dy, std::size_t rank,
                                        std::size_t trials, std::uint64_t seed,
                                        HashingMode hashing, ScalingMode scaling);

/// Raw-estimator statistics for balanced and uniform hashing with identical
/// sign streams.
std::pair<EstimatorStats, EstimatorStats> compare_hashing_variance(const Matrix& x, const Matrix& dy,
                                                                   std::size_t rank,
                                                                   std::size_t trials,
                                                                   std::uint64_t seed);

struct NormInvarianceReport {
  double source_norm = 0;
  double raw_norm = 0;
  double scaled_norm = 0;
  double predicted_norm = 0;   // source * raw / (raw + eps)
  double relative_gap = 0;     // 1 - scaled / source, 0 for a zero source
  bool identity_holds = false; // scaled matches predicted to rounding
  bool within_ceiling = false; // scaled <= source
};

NormInvarianceReport check_norm_invariance(const Matrix& x, std::size_t rank, std::uint64_t seed,
                                           Real epsilon = kDefaultEpsilon);

// ---------------------------------------------------------------------------
// Finite differences.

struct FdOptions {
  double tolerance = 1e-4;
  double step = 1e-5;
  std::size_t coords_per_tensor = 20;
  // Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  std::uint64_t seed = 0;
  std::uint64_t plan_seed = 0;
};

struct FdTensorResult {
  std::string name;
  std::size_t coords = 0;
  double max_rel_error = 0;
  bool pass = false;
};

struct FdReport {
  std::vector<FdTensorResult> tensors;
  double tolerance = 0;
  bool pass() const {
    return !tensors.empty() &&
           std::all_of(tensors.begin(), tensors.end(), [](const auto& t) { return t.pass; });
  }
  double max_rel_error() const {
    double m = 0;
    for (const auto& t : tensors) m = std::max(m, t.max_rel_error);
    return m;
  }
};

/// Central-difference check of the analytic gradient of `model` on `batch`.
/// The model needs forward(batch, ctx) -> loss, backward() and parameters().
template <class Model, class Batch>
FdReport finite_difference_check(Model& model, const Batch& batch, const FdOptions& options) {
  model.forward(batch, ForwardContext{true, options.plan_seed});
  model.backward();
  auto params = model.parameters();
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) analytic.push_back(*p.grad);

  const ForwardContext eval{false, options.plan_seed};
  Rng rng(options.seed);
  FdReport report;
  report.tolerance = options.tolerance;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto values = params[t].value->values();
    std::vector<std::size_t> coords(values.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    rng.shuffle(std::span<std::size_t>(coords));
    coords.resize(std::min(coords.size(), options.coords_per_tensor));

    FdTensorResult result{params[t].name, coords.size(), 0.0, true};
    for (std::size_t idx : coords) {
      const Real original = values[idx];
      values[idx] = static_cast<Real>(original + options.step);
      const double plus = model.forward(batch, eval);
      values[idx] = static_cast<Real>(original - options.step);
      const double minus = model.forward(batch, eval);
      values[idx] = original;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double exact = analytic[t].values()[idx];
      const double denom = std::max({std::abs(numeric), std::abs(exact), options.floor});
      result.max_rel_error = std::max(result.max_rel_error, std::abs(numeric - exact) / denom);
    }
    result.pass = result.max_rel_error < options.tolerance;
    report.tensors.push_back(std::move(result));
  }
  return report;
}

// ---------------------------------------------------------------------------
// Memory accounting.

struct LayerMemory {
  std::string name;
  std::size_t in_features = 0;
  std::size_t cached_floats = 0;
  std::size_t expected_floats = 0;  // from the layer shape, mode and rank
  std::size_t index_ints = 0;
  DenseMode mode = DenseMode::exact;
  // Analytic multiply-add counts of the backward pass.
  std::uint64_t dx_flops = 0;
  std::uint64_t dw_flops = 0;      // product that forms the weight gradient
  std::uint64_t sketch_flops = 0;  // sketching dY (zero in exact mode)
};

struct MemoryReport {
  std::vector<LayerMemory> layers;
  std::size_t total_activation_floats = 0;
  std::size_t theoretical = 0;      // sum of expected_floats
  std::size_t index_ints = 0;       // plan bins + signs, reported separately
  std::size_t auxiliary_floats = 0; // non-dense caches, informational
  std::size_t token_cardinality = 0;
  std::string mode;                 // exact, basis or mixed

  bool consistent() const { return total_activation_floats == theoretical; }
  /// What exact backpropagation would cache for the same layers and batch.
  std::size_t exact_equivalent_floats() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += token_cardinality * l.in_features;
    return n;
  }
};

/// Runs one training-mode forward pass and counts what every dense layer
/// persisted for its backward pass. Caches are released afterwards.
MemoryReport memory_audit(LanguageModel& model, const TokenBatch& batch, std::uint64_t plan_seed = 0);

std::string to_text(const MemoryReport& report);

}  // namespace basis
