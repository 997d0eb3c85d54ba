#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hypermeta/harness/config.hpp"

namespace hypermeta::harness {

namespace fs = std::filesystem;

// Project version plus the source revision captured at configure time.
std::string code_version();

// --out, then the config's output_dir, then $HYPERMETA_OUT, then "runs".
fs::path resolve_output_root(const RunConfig& config, const std::optional<fs::path>& cli_out);

struct RunOptions {
  bool force = false;
  // Reuse a completed run whose config snapshot matches instead of refusing.
  bool reuse = false;
  std::size_t parallel = 1;
};

struct SeedRun {
  std::uint64_t seed = 0;
  fs::path dir;
  bool ok = false;
  bool reused = false;
  double final_window_return = 0.0;
  std::size_t parameter_count = 0;
  std::string error;
};

// Throws RefusalError when `dir` exists and neither force nor a matching
// reusable run applies; removes it under force. Returns true when the
// existing run can be reused.
bool prepare_run_dir(const fs::path& dir, const std::string& snapshot, const RunOptions& options);

// One training run into `dir`: config.yaml, manifest.json, metrics.csv,
// eval.csv, checkpoints and a DONE or FAILED marker. Training errors are
// reported through SeedRun::error; outputs written so far are kept.
SeedRun run_seed(const RunConfig& config, std::uint64_t seed, const fs::path& dir, const RunOptions& options);

// Every seed of `config` into <root>/<name>/seed_<n>.
std::vector<SeedRun> run_train(const RunConfig& config, const fs::path& root, const RunOptions& options);

// Runs jobs on up to `parallel` threads; results keep submission order.
std::vector<SeedRun> run_jobs(const std::vector<std::function<SeedRun()>>& jobs, std::size_t parallel);

std::string seed_dir_name(std::uint64_t seed);
std::string read_text(const fs::path& path);
void write_text(const fs::path& path, const std::string& text);

}  // namespace hypermeta::harness
