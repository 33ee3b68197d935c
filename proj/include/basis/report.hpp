#pragma once

// Serialization of run results: the per-eval CSV, the human-readable run
// report and the sweep comparison table. All output is deterministic for a
// given report except the wall-time line of the text report.

#include <ostream>
#include <string>
#include <vector>

#include "basis/train.hpp"

namespace basis {

inline constexpr const char* kCsvHeader = "step,train_loss,val_loss,rank,mode";

/// Rank column value: the configured rank in basis mode, 0 in exact mode.
std::size_t reported_rank(const TrainConfig& config);
/// "exact" or "basis", or "mixed" when per-layer overrides disagree.
std::string reported_mode(const TrainConfig& config);

void write_csv(std::ostream& out, const std::vector<RunReport>& runs);
std::string config_echo(const TrainConfig& config);
std::string run_report_text(const RunReport& report, bool include_wall_time = true);
/// Method | R | Compression | Final train loss | Final val loss, one row per run.
std::string sweep_table_text(const SweepResult& sweep);
/// "64x", "2x", or one decimal when the ratio is not integral.
std::string compression_label(std::size_t token_cardinality, std::size_t rank);

}  // namespace basis
