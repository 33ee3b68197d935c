#include "basis/train.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <thread>

#include "basis/optim.hpp"

namespace basis {

namespace {

// Stream tags for derive_seed; exact and BASIS runs share every stream
// except that only BASIS consumes the plan stream.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kDataStream = 2;
constexpr std::uint64_t kEvalStream = 3;
constexpr std::uint64_t kPlanStream = 4;

struct EvalSets {
  std::vector<TokenBatch> train, validation;
};

EvalSets make_eval_sets(const TrainConfig& config, const CharCorpus& corpus) {
  const BatchSpec spec{config.batch_size, config.seq_len, derive_seed(config.seed, {kEvalStream})};
  EvalSets sets;
  for (std::size_t i = 0; i < config.val_batches; ++i) {
    sets.train.push_back(sample_lm_batch(corpus, spec, i, Split::train));
    sets.validation.push_back(sample_lm_batch(corpus, spec, i, Split::validation));
  }
  return sets;
}

double mean_loss(LanguageModel& model, const std::vector<TokenBatch>& batches) {
  double total = 0;
  for (const auto& b : batches) total += model.forward(b, ForwardContext{false, 0});
  return total / double(batches.size());
}

std::string first_non_finite(LanguageModel& model) {
  for (const auto& p : model.parameters()) {
    if (!all_finite(*p.value)) return p.name + " (value)";
    if (!all_finite(*p.grad)) return p.name + " (gradient)";
  }
  return "loss";
}

}  // namespace

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (d_model == 0) fail("model.d_model must be positive");
  if (model == ModelKind::transformer && (n_heads == 0 || d_model % n_heads != 0)) {
    fail("model.n_heads must divide model.d_model");
  }
  if (seq_len == 0) fail("model.seq_len must be positive");
  if (batch_size == 0) fail("train.batch_size must be positive");
  if (mode == DenseMode::basis && rank == 0) fail("basis.rank must be >= 1 in basis mode");
  if (!(lambda >= 0 && lambda < 1)) fail("basis.lambda must lie in [0, 1)");
  if (!(epsilon > 0)) fail("basis.epsilon must be positive");
  if (!(lr > 0)) fail("train.lr must be positive");
  if (!(momentum >= 0 && momentum < 1)) fail("train.momentum must lie in [0, 1)");
  if (eval_interval == 0) fail("train.eval_interval must be positive");
  if (val_batches == 0) fail("train.val_batches must be positive");
}

ModelConfig TrainConfig::model_config(std::size_t corpus_vocab) const {
  ModelConfig mc;
  mc.kind = model;
  if (vocab_size != 0 && vocab_size < corpus_vocab) {
    throw ConfigError("model.vocab_size " + std::to_string(vocab_size) +
                      " is smaller than the corpus vocabulary " + std::to_string(corpus_vocab));
  }
  mc.vocab_size = vocab_size == 0 ? corpus_vocab : vocab_size;
  mc.d_model = d_model;
  mc.n_heads = n_heads;
  mc.n_layers = n_layers;
  mc.seq_len = seq_len;
  mc.mlp_hidden = mlp_hidden;
  mc.dense.mode = mode;
  mc.dense.basis.rank = rank == 0 ? 1 : rank;
  mc.dense.basis.lambda = lambda;
  mc.dense.basis.epsilon = epsilon;
  mc.layer_modes = layer_modes;
  mc.init_seed = derive_seed(seed, {kInitStream});
  return mc;
}

RunReport run_training(const TrainConfig& config, const CharCorpus& corpus, const ProgressFn& progress) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  auto model = make_model(config.model_config(corpus.vocab_size()));
  const EvalSets eval_sets = make_eval_sets(config, corpus);
  const BatchSpec train_spec{config.batch_size, config.seq_len, derive_seed(config.seed, {kDataStream})};

  RunReport report;
  report.config = config;
  report.corpus_digest = corpus.digest;
  report.corpus_vocab = corpus.vocab_size();
  report.memory = memory_audit(*model, sample_lm_batch(corpus, train_spec, 0, Split::train),
                               derive_seed(config.seed, {kPlanStream, 0}));

  auto evaluate = [&](std::size_t step) {
    EvalRecord rec{step, mean_loss(*model, eval_sets.train), mean_loss(*model, eval_sets.validation)};
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.val_loss)) {
      throw NumericError("non-finite evaluation loss at step " + std::to_string(step) + " in " +
                         first_non_finite(*model));
    }
    report.records.push_back(rec);
    if (progress) progress(rec);
  };

  evaluate(0);
  MomentumState optimizer;
  optimizer.beta = config.momentum;
  optimizer.learning_rate = config.lr;
  const auto params = model->parameters();
  for (std::size_t step = 1; step <= config.steps; ++step) {
    const TokenBatch batch = sample_lm_batch(corpus, train_spec, step, Split::train);
    const double loss =
        model->forward(batch, ForwardContext{true, derive_seed(config.seed, {kPlanStream, step})});
    if (!std::isfinite(loss)) {
      throw NumericError("non-finite training loss at step " + std::to_string(step) + " in " +
                         first_non_finite(*model));
    }
    model->backward();
    try {
      sgd_momentum_step(params, optimizer);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at step " + std::to_string(step));
    }
    if (step % config.eval_interval == 0 || step == config.steps) evaluate(step);
  }

  report.final_train_loss = report.records.back().train_loss;
  report.final_val_loss = report.records.back().val_loss;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

SweepResult run_rank_sweep(const TrainConfig& base, const std::vector<std::size_t>& ranks,
                           const CharCorpus& corpus, std::size_t jobs) {
  if (ranks.empty()) throw ConfigError("rank sweep needs at least one rank");
  std::vector<TrainConfig> configs;
  TrainConfig exact = base;
  exact.mode = DenseMode::exact;
  configs.push_back(exact);
  for (std::size_t r : ranks) {
    if (r == 0) throw ConfigError("sweep ranks must be >= 1");
    TrainConfig c = base;
    c.mode = DenseMode::basis;
    c.rank = r;
    configs.push_back(c);
  }

  SweepResult result;
  result.runs.resize(configs.size());
  std::vector<std::exception_ptr> errors(configs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      try {
        result.runs[i] = run_training(configs[i], corpus);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, configs.size()));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return result;
}

std::vector<double> fit_linear_task(const LinearTask& task, const DenseConfig& dense, Real lr,
                                    Real momentum, std::size_t steps, std::uint64_t seed) {
  LinearRegressor model(task.x.cols(), task.target.cols(), dense, derive_seed(seed, {kInitStream}));
  const RegressionBatch batch{task.x, task.target};
  MomentumState optimizer;
  optimizer.beta = momentum;
  optimizer.learning_rate = lr;
  const auto params = model.parameters();
  std::vector<double> losses;
  losses.reserve(steps + 1);
  for (std::size_t step = 0; step < steps; ++step) {
    losses.push_back(model.forward(batch, ForwardContext{true, derive_seed(seed, {kPlanStream, step})}));
    model.backward();
    sgd_momentum_step(params, optimizer);
  }
  losses.push_back(model.forward(batch, ForwardContext{false, 0}));
  return losses;
}

std::vector<std::pair<std::size_t, double>> moving_average(const std::vector<EvalRecord>& records,
                                                           std::size_t window) {
  std::vector<std::pair<std::size_t, double>> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::size_t step = records[i].step;
    if (step < window) continue;
    double sum = 0;
    std::size_t n = 0;
    for (std::size_t j = 0; j <= i; ++j) {
      if (records[j].step + window > step) {
        sum += records[j].val_loss;
        ++n;
      }
    }
    out.emplace_back(step, sum / double(n));
  }
  return out;
}

}  // namespace basis
