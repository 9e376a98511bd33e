#pragma once

#include <optional>
#include <string>
#include <vector>

namespace distral {

// exit codes of the run front end
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitRuntimeError = 3;

struct CliRunOptions {
  std::string config_path;
  std::string out_dir = "out";  // DISTRAL_OUT environment variable overrides
  std::optional<uint64_t> seed_override;
  std::vector<std::string> algo_filter;  // labels to keep; empty keeps all
  std::optional<int> workers_override;
  bool serialized = false;  // force the deterministic mode
};

/// Runs a plan config end to end: executes every (algorithm, hyper, seed)
/// run, writes curves.csv, robustness.csv and summary.json plus per-run CSVs
/// and final-parameter dumps under <out>/runs/. Returns an exit code;
/// partial outputs are retained on runtime failure.
int cli_run(const CliRunOptions& opts);

}  // namespace distral
