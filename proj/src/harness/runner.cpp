#include "hypermeta/harness/runner.hpp"

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "hypermeta/errors.hpp"
#include "hypermeta/harness/report.hpp"

#ifndef HYPERMETA_VERSION
#define HYPERMETA_VERSION "0.0.0"
#endif
#ifndef HYPERMETA_REVISION
#define HYPERMETA_REVISION "unknown"
#endif

namespace hypermeta::harness {

std::string code_version() { return std::string(HYPERMETA_VERSION) + "+" + HYPERMETA_REVISION; }

fs::path resolve_output_root(const RunConfig& config, const std::optional<fs::path>& cli_out) {
  if (cli_out) return *cli_out;
  if (config.output_dir) return *config.output_dir;
  if (const char* env = std::getenv("HYPERMETA_OUT"); env && *env) return env;
  return "runs";
}

std::string seed_dir_name(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

bool prepare_run_dir(const fs::path& dir, const std::string& snapshot, const RunOptions& options) {
  if (!fs::exists(dir)) return false;
  if (options.force) {
    fs::remove_all(dir);
    return false;
  }
  if (options.reuse && fs::exists(dir / "DONE") && fs::exists(dir / "config.yaml") &&
      read_text(dir / "config.yaml") == snapshot)
    return true;
  throw RefusalError("run directory " + dir.string() + " already exists (use --force to overwrite)");
}

namespace {

RunConfig seed_config(const RunConfig& config, std::uint64_t seed) {
  RunConfig c = config;
  c.seeds = {seed};
  c.output_dir.reset();
  return c;
}

}  // namespace

SeedRun run_seed(const RunConfig& config, std::uint64_t seed, const fs::path& dir, const RunOptions& options) {
  SeedRun r;
  r.seed = seed;
  r.dir = dir;
  const RunConfig snapshot_cfg = seed_config(config, seed);
  const std::string snapshot = serialize_config(snapshot_cfg);
  const AgentSpec spec = config.agent_spec();
  if (prepare_run_dir(dir, snapshot, options)) {
    r.reused = true;
    r.ok = true;
    r.final_window_return = load_run(dir).final_window_return;
    r.parameter_count = expected_parameter_count(spec);
    return r;
  }
  fs::create_directories(dir);
  write_text(dir / "config.yaml", snapshot);
  try {
    Agent agent(spec);
    const InitManifest manifest = init_model(agent, config.init.assignment(spec), seed);
    r.parameter_count = agent.parameter_count();
    nlohmann::ordered_json m;
    m["code_version"] = code_version();
    m["seed"] = seed;
    m["architecture"] = to_string(spec.architecture);
    m["size"] = config.size;
    m["parameter_count"] = r.parameter_count;
    m["learning_rate"] = config.effective_learning_rate();
    m["init"] = manifest.to_json();
    write_text(dir / "manifest.json", m.dump(2) + "\n");
    const TrainResult res = train(agent, config.env, config.trainer_for(seed), TrainOutputs{dir});
    r.final_window_return = res.final_window_return;
    nlohmann::ordered_json done;
    done["final_window_return"] = res.final_window_return;
    done["updates"] = res.metrics.size();
    write_text(dir / "DONE", done.dump(2) + "\n");
    r.ok = true;
  } catch (const std::exception& e) {
    r.error = e.what();
    write_text(dir / "FAILED", r.error + "\n");
  }
  return r;
}

std::vector<SeedRun> run_jobs(const std::vector<std::function<SeedRun()>>& jobs, std::size_t parallel) {
  std::vector<SeedRun> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < jobs.size(); i = next++) {
      try {
        results[i] = jobs[i]();
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(parallel, jobs.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n; ++t) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
  }
  for (const std::exception_ptr& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

std::vector<SeedRun> run_train(const RunConfig& config, const fs::path& root, const RunOptions& options) {
  const fs::path base = root / config.name;
  // Refuse before any work starts.
  if (!options.force && !options.reuse)
    for (std::uint64_t s : config.seeds)
      if (fs::exists(base / seed_dir_name(s)))
        throw RefusalError("run directory " + (base / seed_dir_name(s)).string() +
                           " already exists (use --force to overwrite)");
  std::vector<std::function<SeedRun()>> jobs;
  for (std::uint64_t s : config.seeds)
    jobs.emplace_back([&, s] { return run_seed(config, s, base / seed_dir_name(s), options); });
  return run_jobs(jobs, options.parallel);
}

}  // namespace hypermeta::harness
