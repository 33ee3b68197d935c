#pragma once

// Command implementations behind the basis_cli executable. Each command
// returns a process exit code: 0 success, 1 configuration or usage error,
// 2 numeric failure.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "basis/config.hpp"

namespace basis {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNumeric = 2;

struct CliOptions {
  std::optional<std::filesystem::path> config;
  std::vector<std::string> overrides;
  std::optional<std::string> ranks;  // comma-separated; absent selects 1,8,16,32,64
  std::size_t jobs = 1;
  std::optional<std::filesystem::path> out;
  bool paper_scale = false;
  bool quiet = false;
};

/// Loads the config file, applies overrides, --out and --paper-scale.
CliConfig resolve_config(const CliOptions& options);
std::vector<std::size_t> parse_rank_list(const std::string& text);

int cmd_train(const CliOptions& options, std::ostream& out, std::ostream& err);
int cmd_sweep(const CliOptions& options, std::ostream& out, std::ostream& err);
int cmd_diagnose(const CliOptions& options, std::ostream& out, std::ostream& err);
int cmd_audit(const CliOptions& options, std::ostream& out, std::ostream& err);

enum class CheckStatus { pass, fail, control };
const char* to_string(CheckStatus status);

struct DiagnosticCheck {
  std::string claim;
  std::string measured;
  std::string bound;
  CheckStatus status = CheckStatus::fail;
};

/// Runs the full diagnostics suite described by `config`.
std::vector<DiagnosticCheck> run_diagnostics(const CliConfig& config);
std::string diagnostics_text(const std::vector<DiagnosticCheck>& checks);

/// Parses argv (without the program name) and dispatches to a command.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace basis
