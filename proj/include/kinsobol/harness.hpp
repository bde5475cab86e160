#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace kinsobol {

inline constexpr const char* kToolVersion = "0.1.0";

enum class SobolMode { Deterministic, Stochastic };

/// Every knob a command reads. Unused fields are ignored by commands that do
/// not need them, but all of them are recorded in the manifest.
struct RunOptions {
  std::string command;
  std::string model_path;
  std::string out_dir = ".";
  double m = 1.0;
  std::vector<double> m_list;
  std::size_t ns = 1024;
  std::size_t ms = 100;
  std::uint64_t design_seed = 1;
  std::uint64_t master_seed = 1;
  unsigned workers = 1;
  double rtol = 1e-8;
  double atol = 1e-10;
  /// auto, dopri5 or rosenbrock.
  std::string solver = "auto";
  std::size_t replicates = 1;
  SobolMode mode = SobolMode::Deterministic;
  double threshold = 0.02;
  bool dump_samples = false;
};

/// Exit codes: 0 success, 2 parse/validation error, 3 numerical failure.
struct CommandResult {
  int exit_code = 0;
  std::string message;
  std::vector<std::string> files;
};

/// Plain-text key=value record of a run, written as manifest.txt next to the
/// outputs.
struct RunManifest {
  std::vector<std::pair<std::string, std::string>> entries;

  static RunManifest from_options(const RunOptions& opts, const std::string& model_hash);
  std::string to_text() const;
  static RunManifest parse(const std::string& text);
  std::optional<std::string> get(const std::string& key) const;
  RunOptions to_options() const;
};

/// 64-bit FNV-1a of the model file contents, as 16 hex digits.
std::string content_hash(const std::string& bytes);

/// Dispatches on opts.command: simulate, rre, sobol, converge, fix-params.
/// Never throws for model, argument or numerical errors; they map to exit
/// codes with a message.
CommandResult run_command(const RunOptions& opts);

/// Re-runs the command recorded in a manifest. The model file must still
/// hash to the recorded value.
CommandResult replay_manifest(const std::string& manifest_path, std::optional<std::string> out_dir,
                              std::optional<unsigned> workers);

CommandResult cmd_simulate(const RunOptions& opts);
CommandResult cmd_rre(const RunOptions& opts);
CommandResult cmd_sobol(const RunOptions& opts);
CommandResult cmd_converge(const RunOptions& opts);
CommandResult cmd_fix_params(const RunOptions& opts);

/// Two-sample Kolmogorov-Smirnov statistic sup |F1 - F2|.
double ks_statistic(std::vector<double> x, std::vector<double> y);

/// Parameters whose total index falls below `threshold`, by index.
std::vector<std::size_t> select_unimportant(const std::vector<double>& totals, double threshold);

}  // namespace kinsobol
