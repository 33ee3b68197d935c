#pragma once

// Flat key-value configuration: one `dotted.key = value` per line, `#`
// comments, blank lines ignored. Unknown keys are rejected. A key without a
// dot is accepted as shorthand when exactly one known key ends with it
// (`rank` means `basis.rank`).

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "basis/train.hpp"

namespace basis {

struct DiagnoseConfig {
  // Expected projector.
  std::size_t sts_batch = 8;
  std::size_t sts_rank = 4;
  std::size_t sts_trials = 20000;
  // Collision variance, balanced against uniform hashing.
  std::size_t variance_batch = 16;
  std::size_t variance_rank = 4;
  std::size_t variance_in = 8;
  std::size_t variance_out = 8;
  std::size_t variance_trials = 10000;
  std::size_t variance_instances = 10;
  bool variance_uniform_only = false;
  // Norm invariance over random matrices at ranks {1, 2, 8, rows}.
  std::size_t norm_matrices = 100;
  std::size_t norm_rows = 16;
  std::size_t norm_cols = 8;
  // Finite differences.
  std::size_t fd_coords = 20;
  std::uint64_t seed = 7;
};

struct CliConfig {
  TrainConfig train;
  std::optional<std::filesystem::path> corpus;
  double split = 0.9;
  std::filesystem::path out_dir = "out";
  DiagnoseConfig diagnose;
};

/// Every accepted key, in canonical order.
const std::vector<std::string>& config_keys();

/// Applies one `key = value` assignment. Relative paths resolve against
/// `base_dir`. Throws ConfigError naming the key on any problem.
void apply_setting(CliConfig& config, std::string_view key, std::string_view value,
                   const std::filesystem::path& base_dir);

/// Parses a whole document. `origin` prefixes error messages.
CliConfig parse_config(std::string_view text, const std::filesystem::path& base_dir,
                       const std::string& origin = "config");

CliConfig load_config(const std::filesystem::path& path);

/// Applies `KEY=VALUE` overrides (paths resolve against the working directory).
void apply_overrides(CliConfig& config, const std::vector<std::string>& overrides);

/// Checks the corpus file exists and is a readable regular file.
void require_corpus(const CliConfig& config);

}  // namespace basis
