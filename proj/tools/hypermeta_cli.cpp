#include <cstdio>
#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "hypermeta/errors.hpp"
#include "hypermeta/harness/commands.hpp"

namespace hm = hypermeta::harness;

namespace {

enum Exit { ok = 0, config_error = 1, runtime_failure = 2, refusal = 3 };

int run_train(const hm::RunConfig& config, const hm::CommandOptions& opts) {
  const hm::TrainSummary s = hm::cmd_train(config, opts);
  for (const hm::SeedRun& r : s.runs) {
    if (r.ok)
      std::printf("%s: final meta-return %.3f%s\n", r.dir.string().c_str(), r.final_window_return,
                  r.reused ? " (reused)" : "");
    else
      std::fprintf(stderr, "%s: FAILED: %s\n", r.dir.string().c_str(), r.error.c_str());
  }
  return s.ok() ? ok : runtime_failure;
}

int run_analyze(const hm::RunConfig& config, const hm::CommandOptions& opts) {
  const hm::AnalyzeSummary s = hm::cmd_analyze_init(config, opts);
  for (std::size_t i = 0; i < s.schemes.size(); ++i)
    std::printf("%-20s pass %zu/%zu  outside fail band %zu/%zu\n", s.schemes[i].c_str(), s.pass_count[i], s.seeds,
                s.fail_count[i], s.seeds);
  std::printf("wrote %s\n", s.dir.string().c_str());
  return ok;
}

int run_equivalence(const hm::RunConfig& config, const hm::CommandOptions& opts) {
  const hm::EquivalenceSummary s = hm::cmd_equivalence(config, opts);
  for (const hypermeta::EquivalenceReport& r : s.reports)
    std::printf("%-16s %-5s max |diff| over %zu steps: %.3e\n", r.fault.c_str(), r.optimizer.c_str(), r.steps(),
                r.max_diff());
  std::printf("wrote %s\n", s.dir.string().c_str());
  return ok;
}

int run_sweep(const hm::RunConfig& config, const hm::CommandOptions& opts) {
  const hm::SweepSummary s = hm::cmd_sweep(config, opts);
  for (const hm::SweepCell& c : s.cells)
    std::printf("%-12s %-4s %-20s n=%zu  %.3f +- %.3f  params=%zu\n", c.architecture.c_str(), c.size.c_str(),
                c.init.c_str(), c.n, c.mean, c.stderr_, c.parameter_count);
  for (const std::string& f : s.failures) std::fprintf(stderr, "FAILED: %s\n", f.c_str());
  std::printf("wrote %s\n", s.dir.string().c_str());
  return s.failures.empty() ? ok : runtime_failure;
}

int run_report(const std::vector<std::string>& dirs, const hm::CommandOptions& opts) {
  std::vector<hm::fs::path> paths(dirs.begin(), dirs.end());
  hm::fs::path out;
  const hm::Report r = hm::cmd_report(paths, opts, &out);
  std::fputs(hm::results_markdown(r).c_str(), stdout);
  std::printf("wrote %s\n", out.string().c_str());
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hypernetwork meta-RL experiments"};
  app.require_subcommand(1);
  std::string config_path, out;
  std::uint64_t seed = 0;
  bool force = false, reuse = false;
  std::size_t parallel = 1;
  std::vector<std::string> report_dirs;

  auto add_common = [&](CLI::App* sub, bool with_config) {
    if (with_config) sub->add_option("--config", config_path, "Run config (YAML); defaults when omitted");
    sub->add_option("--seed", seed, "Run a single seed instead of the config's list");
    sub->add_option("--out", out, "Output root (default: config output_dir, $HYPERMETA_OUT, ./runs)");
    sub->add_flag("--force", force, "Overwrite existing outputs");
    sub->add_option("--parallel", parallel, "Concurrent runs")->check(CLI::PositiveNumber);
  };
  CLI::App* train = app.add_subcommand("train", "Train every seed of a config");
  CLI::App* analyze = app.add_subcommand("analyze-init", "Activation-variance probe and init statistics");
  CLI::App* equivalence = app.add_subcommand("equivalence", "Hypernetwork and independent-network equivalence check");
  CLI::App* sweep = app.add_subcommand("sweep", "Architecture x size x init sweep");
  CLI::App* report = app.add_subcommand("report", "Results table, t-tests and learning curves");
  for (CLI::App* sub : {train, analyze, equivalence, sweep}) add_common(sub, true);
  for (CLI::App* sub : {train, sweep})
    sub->add_flag("--reuse", reuse, "Keep completed runs whose config snapshot matches");
  add_common(report, false);
  report->add_option("dirs", report_dirs, "Method directories (each holding seed_* runs)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : config_error;
  }

  hm::CommandOptions opts;
  if (!out.empty()) opts.out = out;
  if (app.got_subcommand(train) || app.got_subcommand(analyze) || app.got_subcommand(equivalence) ||
      app.got_subcommand(sweep) || app.got_subcommand(report)) {
    CLI::App* sub = app.get_subcommands().front();
    if (sub->count("--seed")) opts.seed = seed;
  }
  opts.force = force;
  opts.reuse = reuse;
  opts.parallel = parallel;

  try {
    if (app.got_subcommand(report)) return run_report(report_dirs, opts);
    const std::optional<hm::fs::path> path =
        config_path.empty() ? std::nullopt : std::optional<hm::fs::path>(config_path);
    const hm::RunConfig config = hm::resolve_config(path, opts);
    if (app.got_subcommand(train)) return run_train(config, opts);
    if (app.got_subcommand(analyze)) return run_analyze(config, opts);
    if (app.got_subcommand(equivalence)) return run_equivalence(config, opts);
    return run_sweep(config, opts);
  } catch (const hm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return config_error;
  } catch (const hypermeta::RefusalError& e) {
    std::cerr << "refused: " << e.what() << "\n";
    return refusal;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return runtime_failure;
  }
}
