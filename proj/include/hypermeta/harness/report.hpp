#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "hypermeta/stats.hpp"

namespace hypermeta::harness {

namespace fs = std::filesystem;

// A completed run directory read back from disk.
struct RunRecord {
  fs::path dir;
  std::string metrics_header;
  std::vector<double> env_steps;
  std::vector<double> returns;  // mean_meta_return per update
  double final_window_return = 0.0;
};

// Throws std::runtime_error unless `dir` holds a DONE marker and metrics.csv.
RunRecord load_run(const fs::path& dir);

// `dir` itself when it is a run directory, otherwise its seed_* children.
std::vector<fs::path> find_runs(const fs::path& dir);

struct MethodSummary {
  std::string name;
  std::vector<RunRecord> runs;
  std::vector<double> finals;
  double mean = 0.0;
  double stderr_ = 0.0;
  bool best_equivalent = false;
};

struct PairTest {
  std::string a;
  std::string b;
  TTestResult test;
};

struct Report {
  std::vector<MethodSummary> methods;
  std::vector<PairTest> pairs;
  std::size_t best = 0;
  double alpha = 0.05;
};

// Methods are given as (name, run records). Best-equivalent: the best mean,
// or a two-tailed t-test against it with p >= alpha.
Report build_report(std::vector<MethodSummary> methods, double alpha = 0.05);
// Method name is the directory name. Throws on incomplete runs or when
// metrics headers differ.
Report build_report(const std::vector<fs::path>& method_dirs, double alpha = 0.05);

// Paired test for methods a and b; needs two runs each.
TTestResult compare(const MethodSummary& a, const MethodSummary& b);

std::string results_csv(const Report& r);
std::string results_markdown(const Report& r);
std::string ttests_csv(const Report& r);
// One polyline per method (seed-mean curve) plus a +-1 stderr band.
std::string learning_curves_svg(const Report& r, std::size_t max_points = 200);

// Writes results.csv, results.md, ttests.csv and learning_curves.svg.
void write_report(const Report& r, const fs::path& out);

struct SweepRow {
  std::string architecture;
  std::string size;
  std::string init;
  std::uint64_t seed = 0;
  double final_window_return = 0.0;
  std::size_t parameter_count = 0;
};

struct SweepCell {
  std::string architecture;
  std::string size;
  std::string init;
  std::size_t n = 0;
  double mean = 0.0;
  double stderr_ = 0.0;
  std::size_t parameter_count = 0;
};

// Groups rows by (architecture, size, init) in first-seen order.
std::vector<SweepCell> aggregate_sweep(const std::vector<SweepRow>& rows);
std::string sweep_rows_csv(const std::vector<SweepRow>& rows);
std::string sweep_summary_csv(const std::vector<SweepCell>& cells);

std::string format_double(double v);

}  // namespace hypermeta::harness
