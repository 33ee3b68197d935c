#include "basis/report.hpp"

#include <cstdio>
#include <sstream>

namespace basis {

namespace {

std::string fixed(double v, int digits = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

const char* to_string(ModelKind kind) { return kind == ModelKind::mlp ? "mlp" : "transformer"; }

}  // namespace

std::size_t reported_rank(const TrainConfig& config) {
  return config.mode == DenseMode::basis || !config.layer_modes.empty() ? config.rank : 0;
}

std::string reported_mode(const TrainConfig& config) {
  bool basis = config.mode == DenseMode::basis, exact = config.mode == DenseMode::exact;
  for (const auto& [name, mode] : config.layer_modes) {
    basis = basis || mode == DenseMode::basis;
    exact = exact || mode == DenseMode::exact;
  }
  if (basis && exact && !config.layer_modes.empty()) return "mixed";
  return to_string(config.mode);
}

void write_csv(std::ostream& out, const std::vector<RunReport>& runs) {
  out << kCsvHeader << "\n";
  for (const auto& run : runs) {
    const std::size_t rank = reported_rank(run.config);
    const std::string mode = reported_mode(run.config);
    for (const auto& r : run.records) {
      out << r.step << "," << fixed(r.train_loss, 8) << "," << fixed(r.val_loss, 8) << "," << rank << ","
          << mode << "\n";
    }
  }
}

std::string config_echo(const TrainConfig& c) {
  std::ostringstream os;
  os << "model.kind = " << to_string(c.model) << "\n"
     << "model.d_model = " << c.d_model << "\n"
     << "model.n_heads = " << c.n_heads << "\n"
     << "model.n_layers = " << c.n_layers << "\n"
     << "model.mlp_hidden = " << c.mlp_hidden << "\n"
     << "model.vocab_size = " << c.vocab_size << "\n"
     << "model.seq_len = " << c.seq_len << "\n"
     << "train.batch_size = " << c.batch_size << "\n"
     << "train.steps = " << c.steps << "\n"
     << "train.eval_interval = " << c.eval_interval << "\n"
     << "train.val_batches = " << c.val_batches << "\n"
     << "train.lr = " << c.lr << "\n"
     << "train.momentum = " << c.momentum << "\n"
     << "train.seed = " << c.seed << "\n"
     << "basis.mode = " << to_string(c.mode) << "\n"
     << "basis.rank = " << c.rank << "\n"
     << "basis.lambda = " << c.lambda << "\n"
     << "basis.epsilon = " << c.epsilon << "\n";
  for (const auto& [name, mode] : c.layer_modes) os << "layer." << name << " = " << to_string(mode) << "\n";
  return os.str();
}

std::string run_report_text(const RunReport& report, bool include_wall_time) {
  const TrainConfig& c = report.config;
  std::ostringstream os;
  os << "run report\n\n[config]\n" << config_echo(c);
  os << "\n[data]\n"
     << "corpus sha256: " << report.corpus_digest << "\n"
     << "corpus vocabulary: " << report.corpus_vocab << "\n"
     << "token cardinality (batch x seq_len): " << c.token_cardinality() << "\n"
     << "evaluation: mean loss over " << c.val_batches << " fixed windows per split, every "
     << c.eval_interval << " steps and at the final step\n";
  os << "\n[result]\n"
     << "mode: " << reported_mode(c) << "\n"
     << "rank: " << reported_rank(c) << "\n"
     << "final train loss: " << fixed(report.final_train_loss) << "\n"
     << "final val loss: " << fixed(report.final_val_loss) << "\n";
  if (include_wall_time) os << "wall time (s): " << fixed(report.wall_seconds, 2) << "\n";
  os << "\n[trajectory]\nstep train_loss val_loss\n";
  for (const auto& r : report.records) {
    os << r.step << " " << fixed(r.train_loss) << " " << fixed(r.val_loss) << "\n";
  }
  os << "\n[memory]\n" << to_text(report.memory);
  return os.str();
}

std::string compression_label(std::size_t token_cardinality, std::size_t rank) {
  const std::size_t r = std::min(rank, token_cardinality);
  if (r == 0) return "-";
  if (token_cardinality % r == 0) return std::to_string(token_cardinality / r) + "x";
  return fixed(double(token_cardinality) / double(r), 1) + "x";
}

std::string sweep_table_text(const SweepResult& sweep) {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof line, "%-8s %6s %12s %18s %16s\n", "Method", "R", "Compression",
                "Final train loss", "Final val loss");
  os << line;
  for (const auto& run : sweep.runs) {
    const TrainConfig& c = run.config;
    const bool basis = c.mode == DenseMode::basis;
    const std::string r = basis ? std::to_string(c.rank) : "-";
    const std::string comp = basis ? compression_label(c.token_cardinality(), c.rank) : "-";
    std::snprintf(line, sizeof line, "%-8s %6s %12s %18s %16s\n", basis ? "BASIS" : "Exact", r.c_str(),
                  comp.c_str(), fixed(run.final_train_loss, 3).c_str(), fixed(run.final_val_loss, 3).c_str());
    os << line;
  }
  return os.str();
}

}  // namespace basis
