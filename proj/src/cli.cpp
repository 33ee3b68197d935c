#include "basis/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "basis/diagnostics.hpp"
#include "basis/report.hpp"
#include "basis/svg.hpp"

namespace basis {

namespace {

constexpr std::uint64_t kAuditTokenStream = 0xA0D17;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("output.dir: cannot write " + path.string());
  f << content;
  if (!f) throw ConfigError("output.dir: failed writing " + path.string());
}

void prepare_out_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw ConfigError("output.dir: cannot create directory " + dir.string());
  }
}

// Vocabulary for commands that build a model without training it.
std::size_t audit_vocab(const CliConfig& config) {
  if (config.train.vocab_size > 0) return config.train.vocab_size;
  if (config.corpus) {
    require_corpus(config);
    return load_char_corpus(*config.corpus, config.split).vocab_size();
  }
  return 256;
}

TokenBatch random_tokens(std::size_t batch, std::size_t seq_len, std::size_t vocab, std::uint64_t seed) {
  Rng rng(seed);
  TokenBatch b;
  b.batch = batch;
  b.seq_len = seq_len;
  for (std::size_t i = 0; i < batch * seq_len; ++i) {
    b.inputs.push_back(static_cast<std::int32_t>(rng.below(vocab)));
    b.targets.push_back(static_cast<std::int32_t>(rng.below(vocab)));
  }
  return b;
}

MemoryReport audit_model(const TrainConfig& train, std::size_t vocab, std::size_t batch_size) {
  TrainConfig c = train;
  c.batch_size = batch_size;
  c.vocab_size = vocab;
  c.validate();
  auto model = make_model(c.model_config(vocab));
  const auto batch = random_tokens(batch_size, c.seq_len, vocab, derive_seed(c.seed, {kAuditTokenStream}));
  return memory_audit(*model, batch, derive_seed(c.seed, {kAuditTokenStream, 1}));
}

PlotSeries val_series(const RunReport& run, const std::string& label) {
  PlotSeries s{label, {}};
  for (const auto& r : run.records) s.points.emplace_back(double(r.step), r.val_loss);
  return s;
}

std::string run_label(const TrainConfig& c) {
  return c.mode == DenseMode::basis ? "BASIS R=" + std::to_string(c.rank) : "exact";
}

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ContractError& e) {
    err << "invalid arguments: " << e.what() << "\n";
    return kExitConfig;
  }
}

double relative_frobenius(const Matrix& a, const Matrix& b) {
  const double denom = frobenius_norm(b);
  const double num = frobenius_norm(subtract(a, b));
  return denom > 0 ? num / denom : num;
}

}  // namespace

CliConfig resolve_config(const CliOptions& options) {
  CliConfig config = options.config ? load_config(*options.config) : CliConfig{};
  apply_overrides(config, options.overrides);
  if (options.out) config.out_dir = *options.out;
  if (options.paper_scale) {
    config.train.steps = 50000;
    config.train.eval_interval = 1000;
  }
  return config;
}

std::vector<std::size_t> parse_rank_list(const std::string& text) {
  std::vector<std::size_t> ranks;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw ConfigError("--ranks: empty entry in " + text);
    item = item.substr(b, e - b + 1);
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != item.size() || v == 0 || item[0] == '-') {
      throw ConfigError("--ranks: '" + item + "' is not a positive integer");
    }
    ranks.push_back(static_cast<std::size_t>(v));
  }
  if (ranks.empty()) throw ConfigError("--ranks: empty rank list");
  return ranks;
}

int cmd_train(const CliOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const CliConfig config = resolve_config(options);
    config.train.validate();
    require_corpus(config);
    prepare_out_dir(config.out_dir);
    const CharCorpus corpus = load_char_corpus(*config.corpus, config.split);
    ProgressFn progress;
    if (!options.quiet) {
      progress = [&](const EvalRecord& r) {
        out << "step " << r.step << "  train " << fmt(r.train_loss) << "  val " << fmt(r.val_loss) << "\n";
      };
    }
    const RunReport report = run_training(config.train, corpus, progress);

    std::ostringstream csv;
    write_csv(csv, {report});
    write_file(config.out_dir / "run.csv", csv.str());
    write_file(config.out_dir / "report.txt", run_report_text(report));
    PlotSeries train{"train", {}};
    for (const auto& r : report.records) train.points.emplace_back(double(r.step), r.train_loss);
    PlotOptions plot;
    plot.title = "loss (" + run_label(config.train) + ")";
    write_file(config.out_dir / "loss.svg",
               render_line_chart({train, val_series(report, "validation")}, plot));
    out << "final train " << fmt(report.final_train_loss) << "  val " << fmt(report.final_val_loss)
        << "\nwrote " << (config.out_dir / "run.csv").string() << ", report.txt, loss.svg\n";
    return kExitOk;
  });
}

int cmd_sweep(const CliOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const CliConfig config = resolve_config(options);
    const auto ranks = parse_rank_list(options.ranks.value_or("1,8,16,32,64"));
    if (options.jobs == 0) throw ConfigError("--jobs must be at least 1");
    config.train.validate();
    require_corpus(config);
    prepare_out_dir(config.out_dir);
    const CharCorpus corpus = load_char_corpus(*config.corpus, config.split);
    const SweepResult sweep = run_rank_sweep(config.train, ranks, corpus, options.jobs);

    std::ostringstream csv;
    write_csv(csv, sweep.runs);
    write_file(config.out_dir / "sweep.csv", csv.str());
    const std::string table = sweep_table_text(sweep);
    write_file(config.out_dir / "table.txt", table);
    std::vector<PlotSeries> series;
    for (const auto& run : sweep.runs) series.push_back(val_series(run, run_label(run.config)));
    PlotOptions plot;
    plot.title = "validation loss by sketch rank";
    write_file(config.out_dir / "loss.svg", render_line_chart(series, plot));
    out << table;
    return kExitOk;
  });
}

const char* to_string(CheckStatus status) {
  switch (status) {
    case CheckStatus::pass: return "PASS";
    case CheckStatus::control: return "CONTROL";
    default: return "FAIL";
  }
}

std::vector<DiagnosticCheck> run_diagnostics(const CliConfig& config) {
  const DiagnoseConfig& d = config.diagnose;
  std::vector<DiagnosticCheck> checks;
  auto add = [&](std::string claim, std::string measured, std::string bound, bool ok) {
    checks.push_back({std::move(claim), std::move(measured), std::move(bound),
                      ok ? CheckStatus::pass : CheckStatus::fail});
  };

  // Expected projector.
  {
    if (d.sts_trials == 0) throw ConfigError("diagnose.sts_trials must be positive");
    const auto sts = estimate_sts_mean(d.sts_batch, d.sts_rank, d.sts_trials, derive_seed(d.seed, {1}));
    const double bound = 4.0 / std::sqrt(double(d.sts_trials));
    add("E[S^T S] = I: diagonal of every S^T S is exactly 1 (B=" + std::to_string(d.sts_batch) +
            ", R=" + std::to_string(d.sts_rank) + ")",
        sts.diagonal_exact ? "exact" : "not exact", "exact", sts.diagonal_exact);
    add("E[S^T S] = I: off-diagonal of the mean over " + std::to_string(d.sts_trials) + " plans",
        "max |offdiag| = " + fmt(sts.max_off_diagonal), "< 4/sqrt(T) = " + fmt(bound),
        sts.max_off_diagonal < bound);
  }

  // Collision variance.
  {
    Rng rng(derive_seed(d.seed, {2}));
    std::size_t wins = 0;
    double worst_ratio = 0;
    std::vector<double> uniform_only;
    for (std::size_t i = 0; i < d.variance_instances; ++i) {
      const Matrix x = random_normal(d.variance_batch, d.variance_in, rng);
      const Matrix dy = random_normal(d.variance_batch, d.variance_out, rng);
      const std::uint64_t seed = derive_seed(d.seed, {3, i});
      if (d.variance_uniform_only) {
        uniform_only.push_back(estimate_weight_gradient(x, dy, d.variance_rank, d.variance_trials, seed,
                                                        HashingMode::uniform, ScalingMode::raw)
                                   .per_entry_variance);
        continue;
      }
      const auto [balanced, uniform] = compare_hashing_variance(x, dy, d.variance_rank, d.variance_trials, seed);
      if (balanced.per_entry_variance <= uniform.per_entry_variance) ++wins;
      if (uniform.per_entry_variance > 0) {
        worst_ratio = std::max(worst_ratio, balanced.per_entry_variance / uniform.per_entry_variance);
      }
    }
    const std::string shape = "B=" + std::to_string(d.variance_batch) + ", R=" + std::to_string(d.variance_rank) +
                              ", N=" + std::to_string(d.variance_in) + ", M=" + std::to_string(d.variance_out) +
                              ", T=" + std::to_string(d.variance_trials);
    if (d.variance_uniform_only) {
      double mean = 0;
      for (double v : uniform_only) mean += v;
      mean /= std::max<std::size_t>(1, uniform_only.size());
      checks.push_back({"collision variance under uniform hashing only (control arm, " + shape + ")",
                        "mean per-entry variance = " + fmt(mean), "none (control measurement)",
                        CheckStatus::control});
    } else {
      add("balanced hashing variance <= uniform hashing variance (" + shape + ")",
          std::to_string(wins) + "/" + std::to_string(d.variance_instances) +
              " instances, worst balanced/uniform ratio " + fmt(worst_ratio),
          std::to_string(d.variance_instances) + "/" + std::to_string(d.variance_instances),
          wins == d.variance_instances);
    }
  }

  // R == B removes every collision.
  {
    Rng rng(derive_seed(d.seed, {4}));
    const Matrix x = random_normal(d.variance_batch, d.variance_in, rng);
    const Matrix dy = random_normal(d.variance_batch, d.variance_out, rng);
    const auto stats = estimate_weight_gradient(x, dy, d.variance_batch, 64, derive_seed(d.seed, {5}),
                                                HashingMode::balanced, ScalingMode::raw);
    double max_var = 0;
    for (Real v : stats.variance.values()) max_var = std::max(max_var, double(v));
    add("R = B: sketched weight gradient has zero variance", "max per-entry variance = " + fmt(max_var),
        "exactly 0", max_var == 0.0);
  }

  // Norm invariance.
  {
    Rng rng(derive_seed(d.seed, {6}));
    std::size_t ceiling_ok = 0, gap_checked = 0, gap_ok = 0, identity_ok = 0, total = 0;
    double worst_gap = 0;
    const std::vector<std::size_t> ranks{1, 2, 8, d.norm_rows};
    for (std::size_t m = 0; m < d.norm_matrices; ++m) {
      const Matrix x = random_normal(d.norm_rows, d.norm_cols, rng);
      for (std::size_t r : ranks) {
        const auto rep = check_norm_invariance(x, r, derive_seed(d.seed, {7, m, r}));
        ++total;
        ceiling_ok += rep.within_ceiling;
        identity_ok += rep.identity_holds;
        if (rep.raw_norm >= 1e-2) {
          ++gap_checked;
          gap_ok += rep.relative_gap <= 1e-6;
          worst_gap = std::max(worst_gap, rep.relative_gap);
        }
      }
    }
    add("||X_hat|| <= ||X|| for every sketch", std::to_string(ceiling_ok) + "/" + std::to_string(total),
        std::to_string(total) + "/" + std::to_string(total), ceiling_ok == total);
    add("||X_hat|| = ||X|| ||X~|| / (||X~|| + eps) to rounding",
        std::to_string(identity_ok) + "/" + std::to_string(total),
        std::to_string(total) + "/" + std::to_string(total), identity_ok == total);
    add("relative norm gap when ||X~|| >= 1e-2", "max gap = " + fmt(worst_gap) + " over " +
            std::to_string(gap_checked) + " sketches",
        "<= 1e-6", gap_ok == gap_checked);
  }

  // Exact input gradient and shrinkage algebra on a single dense layer.
  {
    Rng rng(derive_seed(d.seed, {8}));
    const std::size_t b = d.variance_batch, n = d.variance_in, m = d.variance_out;
    bool dx_exact = true;
    double worst_shrink = 0;
    for (std::size_t i = 0; i < 20; ++i) {
      DenseParams params{random_normal(n, m, rng), Matrix(1, m)};
      const Matrix x = random_normal(b, n, rng);
      const Matrix dy = random_normal(b, m, rng);
      const auto exact = dense_backward_exact(dy, dense_forward_exact(x, params).cache);
      for (std::size_t r : {std::size_t(1), std::size_t(4), b}) {
        const auto fwd = basis_dense_forward(x, params, BasisOptions{r, 0, kDefaultEpsilon}, derive_seed(d.seed, {9, i, r}));
        dx_exact = dx_exact && basis_dense_backward(dy, fwd.cache).dx == exact.dx;
      }
      const auto shr = basis_dense_forward(x, params, BasisOptions{b, Real(0.5), kDefaultEpsilon}, derive_seed(d.seed, {10, i}));
      worst_shrink = std::max(worst_shrink, relative_frobenius(basis_dense_backward(dy, shr.cache).dw,
                                                               scale(exact.dw, Real(0.25))));
    }
    add("BASIS dX equals exact dX bit-for-bit (R in {1, 4, B})", dx_exact ? "identical" : "differs",
        "identical", dx_exact);
    add("lambda = 0.5, R = B: dW_hat = 0.25 dW", "max relative error = " + fmt(worst_shrink), "<= 1e-6",
        worst_shrink <= 1e-6);
  }

  // Finite differences.
  {
    Rng rng(derive_seed(d.seed, {11}));
    FdOptions fd;
    fd.coords_per_tensor = d.fd_coords;
    fd.seed = derive_seed(d.seed, {12});
    const RegressionBatch reg{random_normal(6, 5, rng), random_normal(6, 3, rng)};

    MlpRegressor mlp(5, 7, 3, DenseConfig{}, derive_seed(d.seed, {13}));
    fd.tolerance = 1e-4;
    const auto r1 = finite_difference_check(mlp, reg, fd);
    add("finite differences: exact 2-layer MLP", "max rel error = " + fmt(r1.max_rel_error()), "< 1e-4", r1.pass());

    ModelConfig tc;
    tc.vocab_size = 11;
    tc.d_model = 8;
    tc.n_heads = 2;
    tc.n_layers = 1;
    tc.seq_len = 5;
    tc.init_seed = derive_seed(d.seed, {14});
    Transformer tiny(tc);
    const auto tokens = random_tokens(2, 5, 11, derive_seed(d.seed, {15}));
    fd.tolerance = 1e-3;
    const auto r2 = finite_difference_check(tiny, tokens, fd);
    add("finite differences: exact tiny transformer", "max rel error = " + fmt(r2.max_rel_error()), "< 1e-3",
        r2.pass());

    DenseConfig full{DenseMode::basis, BasisOptions{reg.x.rows(), 0, kDefaultEpsilon}};
    MlpRegressor sketched(5, 7, 3, full, derive_seed(d.seed, {16}));
    fd.plan_seed = derive_seed(d.seed, {17});
    const auto r3 = finite_difference_check(sketched, reg, fd);
    add("finite differences: BASIS MLP with R = B", "max rel error = " + fmt(r3.max_rel_error()), "< 1e-3",
        r3.pass());
  }

  // Activation memory of the configured model.
  {
    const std::size_t vocab = audit_vocab(config);
    const TrainConfig& t = config.train;
    const MemoryReport rep = audit_model(t, vocab, t.batch_size);
    std::size_t expected = 0;
    const std::size_t bt = t.token_cardinality();
    for (const auto& l : rep.layers) {
      expected += (l.mode == DenseMode::basis ? std::min(t.rank, bt) : bt) * l.in_features;
    }
    add("cached activation floats = sum over dense layers of (R or B) * N_in (" + rep.mode + ")",
        std::to_string(rep.total_activation_floats), std::to_string(expected),
        rep.total_activation_floats == expected && rep.consistent());
    if (t.mode == DenseMode::basis && t.layer_modes.empty() && t.rank <= bt) {
      const MemoryReport bigger = audit_model(t, vocab, t.batch_size * 4);
      add("basis cache size independent of batch size (x1 vs x4)",
          std::to_string(rep.total_activation_floats) + " vs " + std::to_string(bigger.total_activation_floats),
          "equal", rep.total_activation_floats == bigger.total_activation_floats);
    }
  }
  return checks;
}

std::string diagnostics_text(const std::vector<DiagnosticCheck>& checks) {
  std::ostringstream os;
  std::size_t passed = 0, failed = 0, control = 0;
  for (const auto& c : checks) {
    os << "[" << to_string(c.status) << "] " << c.claim << "\n"
       << "    measured: " << c.measured << "\n"
       << "    bound:    " << c.bound << "\n";
    passed += c.status == CheckStatus::pass;
    failed += c.status == CheckStatus::fail;
    control += c.status == CheckStatus::control;
  }
  os << "\n" << passed << " passed, " << failed << " failed, " << control << " control\n";
  return os.str();
}

int cmd_diagnose(const CliOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const CliConfig config = resolve_config(options);
    config.train.validate();
    if (config.corpus) require_corpus(config);
    prepare_out_dir(config.out_dir);
    const auto checks = run_diagnostics(config);
    const std::string text = diagnostics_text(checks);
    write_file(config.out_dir / "diagnostics.txt", text);
    out << text;
    const bool ok = std::none_of(checks.begin(), checks.end(),
                                 [](const auto& c) { return c.status == CheckStatus::fail; });
    return ok ? kExitOk : kExitNumeric;
  });
}

int cmd_audit(const CliOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const CliConfig config = resolve_config(options);
    config.train.validate();
    if (config.corpus) require_corpus(config);
    prepare_out_dir(config.out_dir);
    const MemoryReport rep = audit_model(config.train, audit_vocab(config), config.train.batch_size);
    const std::string text = to_text(rep);
    write_file(config.out_dir / "memory.txt", text);
    out << text;
    return kExitOk;
  });
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sketched weight-gradient training toolkit"};
  app.require_subcommand(1);
  CliOptions options;
  std::string config_path, out_dir;
  app.add_option("--config", config_path, "Configuration file (flat dotted key = value)");
  app.add_option("--override", options.overrides, "KEY=VALUE applied after the config file (repeatable)");
  app.add_option("--out", out_dir, "Output directory (overrides output.dir)");
  app.add_flag("--paper-scale", options.paper_scale, "50,000 steps with evaluation every 1,000");
  app.add_flag("--quiet", options.quiet, "No per-evaluation progress lines");
  auto* train = app.add_subcommand("train", "Train one model; writes run.csv, report.txt, loss.svg");
  auto* sweep = app.add_subcommand("sweep", "Exact baseline plus one run per rank; writes sweep.csv, table.txt");
  auto* diagnose = app.add_subcommand("diagnose", "Check the estimator's properties; writes diagnostics.txt");
  auto* audit = app.add_subcommand("audit", "Count cached activation floats; writes memory.txt");
  std::string ranks;
  auto* ranks_opt = sweep->add_option("--ranks", ranks, "Comma-separated sketch ranks (default 1,8,16,32,64)");
  sweep->add_option("--jobs", options.jobs, "Runs executed in parallel")->check(CLI::PositiveNumber);
  for (auto* sub : {train, sweep, diagnose, audit}) sub->fallthrough();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n" << app.help();
    return kExitConfig;
  }
  if (!config_path.empty()) options.config = config_path;
  if (!out_dir.empty()) options.out = out_dir;
  if (ranks_opt->count() > 0) options.ranks = ranks;

  if (*train) return cmd_train(options, out, err);
  if (*sweep) return cmd_sweep(options, out, err);
  if (*diagnose) return cmd_diagnose(options, out, err);
  return cmd_audit(options, out, err);
}

}  // namespace basis
