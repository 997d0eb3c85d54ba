#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hypermeta/harness/config.hpp"
#include "hypermeta/harness/report.hpp"
#include "hypermeta/harness/runner.hpp"

namespace hypermeta::harness {

// Options shared by every subcommand, as given on the command line.
struct CommandOptions {
  std::optional<fs::path> out;
  std::optional<std::uint64_t> seed;
  bool force = false;
  bool reuse = false;
  std::size_t parallel = 1;
};

// Loads a config (defaults when `path` is empty) and applies --seed.
RunConfig resolve_config(const std::optional<fs::path>& path, const CommandOptions& options);

struct TrainSummary {
  std::vector<SeedRun> runs;
  [[nodiscard]] bool ok() const;
};
TrainSummary cmd_train(const RunConfig& config, const CommandOptions& options);

struct AnalyzeSummary {
  fs::path dir;
  std::vector<std::string> schemes;
  // Per scheme: seeds inside the pass band, seeds outside the fail band.
  std::vector<std::size_t> pass_count;
  std::vector<std::size_t> fail_count;
  std::size_t seeds = 0;
};
// Writes variance.csv, variance_summary.csv, init_stats.csv and summary.md
// into <root>/<name>/analyze_init.
AnalyzeSummary cmd_analyze_init(const RunConfig& config, const CommandOptions& options);

struct EquivalenceSummary {
  fs::path dir;
  std::vector<EquivalenceReport> reports;
};
// Refuses (RefusalError) before writing anything when Adam is configured
// for the exact variant.
EquivalenceSummary cmd_equivalence(const RunConfig& config, const CommandOptions& options);

struct SweepSummary {
  fs::path dir;
  std::vector<SweepRow> rows;
  std::vector<SweepCell> cells;
  std::vector<std::string> failures;
};
// Cells are <root>/<name>/<architecture>_<size>_<init>/seed_<n>; the
// standard architecture gets a single "default" init cell per size.
SweepSummary cmd_sweep(const RunConfig& config, const CommandOptions& options);
std::string sweep_cell_name(Architecture a, const std::string& size, const std::string& init);
RunConfig sweep_cell_config(const RunConfig& config, Architecture a, const std::string& size, const std::string& init);

// Writes the report into options.out, or <dirs[0]>/../report.
Report cmd_report(const std::vector<fs::path>& method_dirs, const CommandOptions& options, fs::path* written = nullptr);

}  // namespace hypermeta::harness
