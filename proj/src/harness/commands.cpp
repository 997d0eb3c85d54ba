#include "hypermeta/harness/commands.hpp"

#include <cstdio>
#include <sstream>

#include "hypermeta/errors.hpp"
#include "hypermeta/layout.hpp"

namespace hypermeta::harness {

RunConfig resolve_config(const std::optional<fs::path>& path, const CommandOptions& options) {
  RunConfig c = path ? load_config(*path) : parse_config("", "<defaults>");
  if (options.seed) c.seeds = {*options.seed};
  c.validate();
  return c;
}

bool TrainSummary::ok() const {
  for (const SeedRun& r : runs)
    if (!r.ok) return false;
  return true;
}

namespace {

RunOptions run_options(const CommandOptions& o) { return RunOptions{o.force, o.reuse, o.parallel}; }

// Output directory for a non-training command; refuses to overwrite.
fs::path prepare_output(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!force) throw RefusalError("output directory " + dir.string() + " already exists (use --force to overwrite)");
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
  return dir;
}

const char* verdict(const VarianceReport& r, const VarianceBands& b) {
  if (r.within_pass_band(b)) return "pass";
  if (r.outside_fail_band(b)) return "fail";
  return "marginal";
}

}  // namespace

TrainSummary cmd_train(const RunConfig& config, const CommandOptions& options) {
  const fs::path root = resolve_output_root(config, options.out);
  return TrainSummary{run_train(config, root, run_options(options))};
}

AnalyzeSummary cmd_analyze_init(const RunConfig& config, const CommandOptions& options) {
  const AnalysisConfig& a = config.analysis;
  if (a.schemes.empty()) throw ConfigError("analysis.schemes is empty");
  std::vector<InitScheme> schemes;
  for (const std::string& name : a.schemes) schemes.push_back(method_scheme(name, config.init.base));
  AgentSpec spec = config.agent_spec();
  spec.embed_dim = a.probe.embed_dim;
  const BaseNetSpec base = spec.base_spec();
  const std::uint64_t seed0 = config.seeds.front();

  AnalyzeSummary out;
  out.dir = prepare_output(resolve_output_root(config, options.out) / config.name / "analyze_init", options.force);
  out.schemes = a.schemes;
  out.seeds = a.probe_seeds;
  std::ostringstream rows, summary, stats;
  rows << "scheme,seed,layer,variance,ratio,input_variance,final_ratio,verdict\n";
  summary << "scheme,seeds,pass,fail,marginal,median_final_ratio,verdict\n";
  stats << "scheme,rows,cols,draws,mean,mean_stderr,variance,expected_variance,min_row_norm,max_row_norm,"
           "min_singular,max_singular\n";
  std::string md = "| scheme | pass band | outside fail band | median final ratio |\n|---|---|---|---|\n";
  for (std::size_t s = 0; s < schemes.size(); ++s) {
    std::size_t pass = 0, fail = 0;
    std::vector<double> finals;
    for (std::size_t k = 0; k < a.probe_seeds; ++k) {
      const Rng rng = Rng(seed0 + k).stream("analysis").stream(a.schemes[s]);
      const VarianceReport rep = variance_probe(schemes[s], base, rng, a.probe);
      const char* v = verdict(rep, a.bands);
      pass += rep.within_pass_band(a.bands);
      fail += rep.outside_fail_band(a.bands);
      finals.push_back(rep.final_ratio());
      for (std::size_t l = 0; l < rep.layer_variance.size(); ++l)
        rows << a.schemes[s] << "," << seed0 + k << "," << l << "," << format_double(rep.layer_variance[l]) << ","
             << format_double(rep.layer_ratio[l]) << "," << format_double(rep.input_variance) << ","
             << format_double(rep.final_ratio()) << "," << v << "\n";
    }
    std::sort(finals.begin(), finals.end());
    const double median = finals.empty() ? 0.0 : finals[finals.size() / 2];
    const std::size_t n = a.probe_seeds;
    const char* overall = pass == n ? "pass" : (fail == n ? "fail" : "mixed");
    summary << a.schemes[s] << "," << n << "," << pass << "," << fail << "," << n - pass - fail << ","
            << format_double(median) << "," << overall << "\n";
    md += "| " + a.schemes[s] + " | " + std::to_string(pass) + "/" + std::to_string(n) + " | " +
          std::to_string(fail) + "/" + std::to_string(n) + " | " + format_double(median) + " |\n";
    out.pass_count.push_back(pass);
    out.fail_count.push_back(fail);

    // Matrix statistics only make sense for schemes that sample a matrix directly.
    const InitScheme& sc = schemes[s];
    if (sc.kind == SchemeKind::kaiming || sc.kind == SchemeKind::normc || sc.kind == SchemeKind::orthogonal) {
      const Shape shape{a.stats_shape.at(0), a.stats_shape.at(1)};
      const InitStats st = init_stats(sc, shape, a.stats_draws, Rng(seed0).stream("init_stats").stream(a.schemes[s]));
      stats << a.schemes[s] << "," << shape[0] << "," << shape[1] << "," << st.draws << "," << format_double(st.mean)
            << "," << format_double(st.mean_stderr) << "," << format_double(st.variance) << ","
            << format_double(st.expected_variance) << "," << format_double(st.min_row_norm) << ","
            << format_double(st.max_row_norm) << "," << format_double(st.min_singular) << ","
            << format_double(st.max_singular) << "\n";
    }
  }
  char bands[160];
  std::snprintf(bands, sizeof bands, "\nPass band [%g, %g] on every layer ratio; fail band [%g, %g] on the final ratio.\n",
                a.bands.pass_lo, a.bands.pass_hi, a.bands.fail_lo, a.bands.fail_hi);
  write_text(out.dir / "variance.csv", rows.str());
  write_text(out.dir / "variance_summary.csv", summary.str());
  write_text(out.dir / "init_stats.csv", stats.str());
  write_text(out.dir / "summary.md", md + bands);
  write_text(out.dir / "config.yaml", serialize_config(config));
  return out;
}

EquivalenceSummary cmd_equivalence(const RunConfig& config, const CommandOptions& options) {
  const EquivalenceSection& e = config.equivalence;
  if (e.faults.empty()) throw ConfigError("equivalence.faults is empty");
  std::vector<EquivalenceConfig> variants;
  for (EquivalenceFault f : e.faults) {
    EquivalenceConfig c = e.oracle;
    c.fault = f;
    if (f == EquivalenceFault::adam) c.optimizer = OptimizerKind::adam;
    c.validate();
    variants.push_back(c);
  }
  EquivalenceSummary out;
  out.dir = prepare_output(resolve_output_root(config, options.out) / config.name / "equivalence", options.force);
  std::ostringstream steps, summary;
  steps << "fault,optimizer,step,max_abs_diff\n";
  summary << "fault,optimizer,steps,max_abs_diff\n";
  const std::uint64_t seed = config.seeds.front();
  for (const EquivalenceConfig& c : variants) {
    const EquivalenceReport r = equivalence_oracle(c, Rng(seed).stream("equivalence"));
    for (std::size_t k = 0; k < r.max_abs_diff.size(); ++k)
      steps << r.fault << "," << r.optimizer << "," << k << "," << format_double(r.max_abs_diff[k]) << "\n";
    summary << r.fault << "," << r.optimizer << "," << r.steps() << "," << format_double(r.max_diff()) << "\n";
    out.reports.push_back(r);
  }
  write_text(out.dir / "equivalence.csv", steps.str());
  write_text(out.dir / "equivalence_summary.csv", summary.str());
  write_text(out.dir / "config.yaml", serialize_config(config));
  return out;
}

std::string sweep_cell_name(Architecture a, const std::string& size, const std::string& init) {
  return to_string(a) + "_" + size + "_" + init;
}

RunConfig sweep_cell_config(const RunConfig& config, Architecture a, const std::string& size,
                            const std::string& init) {
  RunConfig c = config;
  c.architecture = a;
  c.size = size;
  c.init.method = init;
  c.init.groups.clear();
  c.name = sweep_cell_name(a, size, a == Architecture::standard ? "default" : init);
  c.sweep = {};
  c.validate();
  return c;
}

SweepSummary cmd_sweep(const RunConfig& config, const CommandOptions& options) {
  const SweepConfig& s = config.sweep;
  const std::vector<Architecture> archs = s.architectures.empty() ? std::vector{config.architecture} : s.architectures;
  const std::vector<std::string> sizes = s.sizes.empty() ? std::vector{config.size} : s.sizes;
  const std::vector<std::string> inits = s.inits.empty() ? std::vector{config.init.method} : s.inits;
  if (s.architectures.empty() && s.sizes.empty() && s.inits.empty())
    throw ConfigError("sweep: no architectures, sizes or inits listed");
  if (config.seeds.empty()) throw ConfigError("sweep: empty seed list");

  const fs::path root = resolve_output_root(config, options.out);
  const RunOptions ro = run_options(options);
  struct Cell {
    RunConfig config;
    std::string arch, size, init;
  };
  std::vector<Cell> cells;
  for (Architecture a : archs)
    for (const std::string& size : sizes)
      for (const std::string& init : inits) {
        // The standard architecture has no generated parameters, so one init suffices.
        if (a == Architecture::standard && &init != &inits.front()) continue;
        cells.push_back({sweep_cell_config(config, a, size, init), to_string(a), size,
                         a == Architecture::standard ? std::string("default") : init});
      }
  if (cells.empty()) throw ConfigError("sweep: empty sweep set");
  if (!ro.force && !ro.reuse)
    for (const Cell& c : cells)
      for (std::uint64_t seed : config.seeds)
        if (const fs::path d = root / config.name / c.config.name / seed_dir_name(seed); fs::exists(d))
          throw RefusalError("run directory " + d.string() + " already exists (use --force to overwrite)");

  std::vector<std::function<SeedRun()>> jobs;
  std::vector<std::size_t> job_cell;
  for (std::size_t i = 0; i < cells.size(); ++i)
    for (std::uint64_t seed : config.seeds) {
      jobs.emplace_back([&, i, seed] {
        return run_seed(cells[i].config, seed, root / config.name / cells[i].config.name / seed_dir_name(seed), ro);
      });
      job_cell.push_back(i);
    }
  const std::vector<SeedRun> runs = run_jobs(jobs, options.parallel);

  SweepSummary out;
  out.dir = root / config.name;
  for (std::size_t j = 0; j < runs.size(); ++j) {
    const Cell& c = cells[job_cell[j]];
    if (!runs[j].ok) {
      out.failures.push_back(runs[j].dir.string() + ": " + runs[j].error);
      continue;
    }
    out.rows.push_back({c.arch, c.size, c.init, runs[j].seed, runs[j].final_window_return,
                        expected_parameter_count(c.config.agent_spec())});
  }
  out.cells = aggregate_sweep(out.rows);
  fs::create_directories(out.dir);
  write_text(out.dir / "sweep.csv", sweep_rows_csv(out.rows));
  write_text(out.dir / "sweep_summary.csv", sweep_summary_csv(out.cells));
  return out;
}

Report cmd_report(const std::vector<fs::path>& method_dirs, const CommandOptions& options, fs::path* written) {
  if (method_dirs.empty()) throw ConfigError("report: no run directories given");
  const Report r = build_report(method_dirs);
  const fs::path out = options.out ? *options.out : fs::path(method_dirs.front()).lexically_normal().parent_path() / "report";
  write_report(r, out);
  if (written) *written = out;
  return r;
}

}  // namespace hypermeta::harness
