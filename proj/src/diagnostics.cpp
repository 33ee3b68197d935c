#include "basis/diagnostics.hpp"

#include <cstdio>
#include <sstream>

namespace basis {

namespace {

constexpr std::size_t kTrialChunks = 64;

// Runs `sample(t)` for t in [0, trials) and reduces the moments chunk by
// chunk. The chunk layout depends only on `trials`.
template <class Sample>
MomentAccumulator chunked_moments(std::size_t rows, std::size_t cols, std::size_t trials,
                                  const Sample& sample) {
  const std::size_t chunks = std::min(kTrialChunks, trials);
  std::vector<MomentAccumulator> parts(chunks, MomentAccumulator(rows, cols));
  const auto n_chunks = static_cast<std::int64_t>(chunks);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t c = 0; c < n_chunks; ++c) {
    const std::size_t begin = std::size_t(c) * trials / chunks;
    const std::size_t end = (std::size_t(c) + 1) * trials / chunks;
    for (std::size_t t = begin; t < end; ++t) parts[std::size_t(c)].add(sample(t));
  }
  MomentAccumulator total(rows, cols);
  for (const auto& part : parts) total.merge(part);
  return total;
}

double mean_entry(const Matrix& m) {
  double s = 0;
  for (Real v : m.values()) s += v;
  return m.size() == 0 ? 0.0 : s / double(m.size());
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

const char* to_string(HashingMode mode) { return mode == HashingMode::balanced ? "balanced" : "uniform"; }
const char* to_string(ScalingMode mode) { return mode == ScalingMode::invariant ? "invariant" : "raw"; }

std::vector<std::uint32_t> uniform_assignment(std::size_t batch_card, std::size_t rank,
                                              std::uint64_t seed) {
  if (batch_card == 0 || rank == 0) {
    throw ContractError("uniform_assignment: batch_card and rank must be positive");
  }
  Rng rng(seed);
  std::vector<std::uint32_t> bins(batch_card);
  for (auto& b : bins) b = static_cast<std::uint32_t>(rng.below(rank));
  return bins;
}

SketchPlan build_uniform_plan(std::size_t batch_card, std::size_t rank, std::uint64_t seed) {
  SketchPlan plan = build_plan(batch_card, rank, seed);
  plan.bins = uniform_assignment(batch_card, plan.rank, derive_seed(seed, {0xC0'17'20'1ULL}));
  return plan;
}

Matrix sketched_weight_gradient(const Matrix& x, const Matrix& dy, const SketchPlan& plan,
                                ScalingMode scaling, Real epsilon) {
  SketchPlan canonical = plan;
  std::vector<std::int64_t> relabel(plan.rank, -1);
  std::uint32_t next = 0;
  for (auto& bin : canonical.bins) {
    if (relabel[bin] < 0) relabel[bin] = next++;
    bin = static_cast<std::uint32_t>(relabel[bin]);
  }
  const SketchedTensor xs = sketch_tensor(x, canonical, epsilon, scaling);
  const SketchedTensor ds = sketch_tensor(dy, canonical, epsilon, scaling);
  return matmul_tn(xs.values, ds.values);
}

// ---------------------------------------------------------------------------

void MomentAccumulator::add(const Matrix& sample) {
  if (sample.rows() != mean_.rows() || sample.cols() != mean_.cols()) {
    throw ContractError("MomentAccumulator: sample shape " + shape_string(sample) + " vs " +
                        shape_string(mean_));
  }
  ++count_;
  auto mv = mean_.values();
  auto m2 = m2_.values();
  auto sv = sample.values();
  const Real inv = Real(1) / Real(count_);
  for (std::size_t i = 0; i < mv.size(); ++i) {
    const Real delta = sv[i] - mv[i];
    mv[i] += delta * inv;
    m2[i] += delta * (sv[i] - mv[i]);
  }
}

void MomentAccumulator::merge(const MomentAccumulator& other) {
  if (other.count_ == 0) return;
  if (count_ == 0) {
    *this = other;
    return;
  }
  const Real na = Real(count_), nb = Real(other.count_), n = na + nb;
  auto mv = mean_.values();
  auto m2 = m2_.values();
  auto omv = other.mean_.values();
  auto om2 = other.m2_.values();
  for (std::size_t i = 0; i < mv.size(); ++i) {
    const Real delta = omv[i] - mv[i];
    mv[i] += delta * nb / n;
    m2[i] += om2[i] + delta * delta * na * nb / n;
  }
  count_ += other.count_;
}

Matrix MomentAccumulator::variance() const {
  Matrix v(m2_.rows(), m2_.cols());
  if (count_ < 2) return v;
  auto vv = v.values();
  auto m2 = m2_.values();
  for (std::size_t i = 0; i < vv.size(); ++i) vv[i] = m2[i] / Real(count_ - 1);
  return v;
}

// ---------------------------------------------------------------------------

StsEstimate estimate_sts_mean(std::size_t batch_card, std::size_t rank, std::size_t trials,
                              std::uint64_t seed) {
  if (trials == 0) throw ContractError("estimate_sts_mean: trials must be positive");
  const std::size_t chunks = std::min(kTrialChunks, trials);
  std::vector<Matrix> sums(chunks, Matrix(batch_card, batch_card));
  std::vector<std::uint8_t> diag_ok(chunks, 1), offdiag_zero(chunks, 1);
  const auto n_chunks = static_cast<std::int64_t>(chunks);
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t c = 0; c < n_chunks; ++c) {
    const std::size_t begin = std::size_t(c) * trials / chunks;
    const std::size_t end = (std::size_t(c) + 1) * trials / chunks;
    for (std::size_t t = begin; t < end; ++t) {
      const SketchPlan plan = build_plan(batch_card, rank, derive_seed(seed, {t}));
      const Matrix s = projection_matrix(plan);
      const Matrix p = matmul_tn(s, s);
      for (std::size_t i = 0; i < batch_card; ++i) {
        for (std::size_t j = 0; j < batch_card; ++j) {
          if (i == j && p(i, j) != Real(1)) diag_ok[std::size_t(c)] = 0;
          if (i != j && p(i, j) != Real(0)) offdiag_zero[std::size_t(c)] = 0;
        }
      }
      add_inplace(sums[std::size_t(c)], p);  // integer-valued, so the sum is exact
    }
  }
  StsEstimate est;
  est.trials = trials;
  est.mean = Matrix(batch_card, batch_card);
  for (std::size_t c = 0; c < chunks; ++c) {
    add_inplace(est.mean, sums[c]);
    est.diagonal_exact = est.diagonal_exact && diag_ok[c];
    est.off_diagonal_zero = est.off_diagonal_zero && offdiag_zero[c];
  }
  scale_inplace(est.mean, Real(1) / Real(trials));
  for (std::size_t i = 0; i < batch_card; ++i)
    for (std::size_t j = 0; j < batch_card; ++j)
      if (i != j) est.max_off_diagonal = std::max(est.max_off_diagonal, double(std::abs(est.mean(i, j))));
  return est;
}

EstimatorStats estimate_weight_gradient(const Matrix& x, const Matrix& dy, std::size_t rank,
                                        std::size_t trials, std::uint64_t seed,
                                        HashingMode hashing, ScalingMode scaling) {
  if (x.rows() != dy.rows()) {
    throw ContractError("estimate_weight_gradient: x " + shape_string(x) + " and dy " +
                        shape_string(dy) + " differ in rows");
  }
  if (trials == 0) throw ContractError("estimate_weight_gradient: trials must be positive");
  const std::size_t batch_card = x.rows();
  auto sample = [&](std::size_t t) {
    const std::uint64_t s = derive_seed(seed, {t});
    const SketchPlan plan = hashing == HashingMode::balanced ? build_plan(batch_card, rank, s)
                                                             : build_uniform_plan(batch_card, rank, s);
    return sketched_weight_gradient(x, dy, plan, scaling);
  };
  const MomentAccumulator moments = chunked_moments(x.cols(), dy.cols(), trials, sample);

  EstimatorStats stats;
  stats.trials = trials;
  stats.hashing = hashing;
  stats.scaling = scaling;
  stats.mean = moments.mean();
  stats.variance = moments.variance();
  stats.per_entry_variance = mean_entry(stats.variance);
  const Matrix exact = matmul_tn(x, dy);
  double bias = 0;
  for (std::size_t i = 0; i < exact.size(); ++i) bias += std::abs(stats.mean.values()[i] - exact.values()[i]);
  stats.mean_abs_bias = bias / double(exact.size());
  return stats;
}

std::pair<EstimatorStats, EstimatorStats> compare_hashing_variance(const Matrix& x, const Matrix& dy,
                                                                   std::size_t rank,
                                                                   std::size_t trials,
                                                                   std::uint64_t seed) {
  // Both arms use plan seeds derive(seed, t), so their sign vectors coincide.
  return {estimate_weight_gradient(x, dy, rank, trials, seed, HashingMode::balanced, ScalingMode::raw),
          estimate_weight_gradient(x, dy, rank, trials, seed, HashingMode::uniform, ScalingMode::raw)};
}

NormInvarianceReport check_norm_invariance(const Matrix& x, std::size_t rank, std::uint64_t seed,
                                           Real epsilon) {
  const SketchPlan plan = build_plan(x.rows(), rank, seed);
  Matrix raw = apply_sketch(x, plan);
  NormInvarianceReport r;
  r.source_norm = frobenius_norm(x);
  r.raw_norm = frobenius_norm(raw);
  const SketchedTensor scaled = invariant_scale(Real(r.source_norm), std::move(raw), epsilon);
  r.scaled_norm = frobenius_norm(scaled.values);
  r.predicted_norm = r.source_norm == 0 ? 0.0 : r.source_norm * r.raw_norm / (r.raw_norm + epsilon);
  r.relative_gap = r.source_norm == 0 ? 0.0 : 1.0 - r.scaled_norm / r.source_norm;
  const double rounding = 64.0 * std::numeric_limits<Real>::epsilon() * std::max(1.0, r.predicted_norm);
  r.identity_holds = std::abs(r.scaled_norm - r.predicted_norm) <= rounding;
  r.within_ceiling = r.scaled_norm <= r.source_norm;
  return r;
}

// ---------------------------------------------------------------------------

MemoryReport memory_audit(LanguageModel& model, const TokenBatch& batch, std::uint64_t plan_seed) {
  model.forward(batch, ForwardContext{true, plan_seed});
  MemoryReport report;
  report.token_cardinality = batch.tokens();
  const std::size_t b = batch.tokens();
  bool any_exact = false, any_basis = false;
  for (Dense* layer : model.dense_layers()) {
    LayerMemory m;
    m.name = layer->name();
    m.mode = layer->config().mode;
    m.in_features = layer->in_features();
    m.cached_floats = layer->cached_activation_floats();
    m.index_ints = layer->cached_index_ints();
    const std::uint64_t n = layer->in_features(), out = layer->out_features();
    m.dx_flops = b * n * out;
    if (m.mode == DenseMode::basis) {
      const std::size_t r = std::min(layer->config().basis.rank, b);
      m.expected_floats = r * n;
      m.dw_flops = r * n * out;
      m.sketch_flops = b * out;
      any_basis = true;
    } else {
      m.expected_floats = b * n;
      m.dw_flops = b * n * out;
      any_exact = true;
    }
    report.total_activation_floats += m.cached_floats;
    report.theoretical += m.expected_floats;
    report.index_ints += m.index_ints;
    report.layers.push_back(std::move(m));
    layer->clear_cache();
  }
  report.auxiliary_floats = model.auxiliary_cached_floats();
  report.mode = any_basis && any_exact ? "mixed" : (any_basis ? "basis" : "exact");
  return report;
}

std::string to_text(const MemoryReport& report) {
  std::ostringstream os;
  os << "mode: " << report.mode << "\n";
  os << "token cardinality (B): " << report.token_cardinality << "\n";
  os << "layer,mode,cached_floats,expected_floats,index_ints,dx_flops,dw_flops,dy_sketch_flops\n";
  std::uint64_t dx = 0, dw = 0, sk = 0;
  for (const auto& l : report.layers) {
    os << l.name << "," << to_string(l.mode) << "," << l.cached_floats << "," << l.expected_floats << ","
       << l.index_ints << "," << l.dx_flops << "," << l.dw_flops << "," << l.sketch_flops << "\n";
    dx += l.dx_flops;
    dw += l.dw_flops;
    sk += l.sketch_flops;
  }
  os << "total activation floats: " << report.total_activation_floats << "\n";
  os << "theoretical activation floats: " << report.theoretical << "\n";
  os << "consistent: " << (report.consistent() ? "yes" : "no") << "\n";
  os << "plan index integers: " << report.index_ints << "\n";
  os << "auxiliary cached floats (norms, attention, activations): " << report.auxiliary_floats << "\n";
  os << "backward multiply-adds: dx " << dx << ", dw " << dw << ", dy sketch " << sk << "\n";
  if (report.total_activation_floats > 0) {
    os << "compression vs exact backprop: "
       << fmt_double(double(report.exact_equivalent_floats()) / double(report.total_activation_floats))
       << "x\n";
  }
  return os.str();
}

}  // namespace basis
