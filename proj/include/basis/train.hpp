#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "basis/data.hpp"
#include "basis/diagnostics.hpp"
#include "basis/models.hpp"

namespace basis {

struct TrainConfig {
  ModelKind model = ModelKind::transformer;
  std::size_t d_model = 64;
  std::size_t n_heads = 2;
  std::size_t n_layers = 2;
  std::size_t mlp_hidden = 0;
  std::size_t vocab_size = 0;  // 0: use the corpus vocabulary
  std::size_t seq_len = 64;
  std::size_t batch_size = 1;
  DenseMode mode = DenseMode::exact;
  std::size_t rank = 64;
  Real lambda = 0;
  Real epsilon = kDefaultEpsilon;
  Real lr = Real(0.01);
  Real momentum = Real(0.9);
  std::size_t steps = 5000;
  std::size_t eval_interval = 100;
  std::size_t val_batches = 32;
  std::uint64_t seed = 1234;
  std::map<std::string, DenseMode> layer_modes;

  /// Throws ConfigError describing the first invalid field.
  void validate() const;
  std::size_t token_cardinality() const { return batch_size * seq_len; }
  ModelConfig model_config(std::size_t corpus_vocab) const;
};

struct EvalRecord {
  std::size_t step = 0;
  double train_loss = 0;
  double val_loss = 0;
};

struct RunReport {
  TrainConfig config;
  std::vector<EvalRecord> records;
  double final_train_loss = 0;
  double final_val_loss = 0;
  MemoryReport memory;
  double wall_seconds = 0;
  std::string corpus_digest;
  std::size_t corpus_vocab = 0;
};

using ProgressFn = std::function<void(const EvalRecord&)>;

/// Trains one model. Evaluation happens at step 0 and every eval_interval
/// steps (and at the last step): the mean loss over a fixed, seeded set of
/// `val_batches` windows from each split. Deterministic given the config.
RunReport run_training(const TrainConfig& config, const CharCorpus& corpus,
                       const ProgressFn& progress = {});

struct SweepResult {
  std::vector<RunReport> runs;  // exact baseline first, then one per rank in order
};

/// Exact baseline plus one BASIS run per rank, all on identical data and
/// initialization streams. Runs execute on up to `jobs` threads.
SweepResult run_rank_sweep(const TrainConfig& base, const std::vector<std::size_t>& ranks,
                           const CharCorpus& corpus, std::size_t jobs = 1);

/// Trajectory of mean squared error when fitting the linear task with the
/// given dense configuration (full batch, momentum SGD).
std::vector<double> fit_linear_task(const LinearTask& task, const DenseConfig& dense, Real lr,
                                    Real momentum, std::size_t steps, std::uint64_t seed);

/// Trailing moving average over `window` steps of an evaluation series.
std::vector<std::pair<std::size_t, double>> moving_average(const std::vector<EvalRecord>& records,
                                                           std::size_t window);

}  // namespace basis
