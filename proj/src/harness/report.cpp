#include "hypermeta/harness/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "hypermeta/trainer.hpp"

namespace hypermeta::harness {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, sep)) out.push_back(cur);
  return out;
}

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

RunRecord load_run(const fs::path& dir) {
  if (!fs::exists(dir / "DONE")) throw std::runtime_error(dir.string() + " is not a completed run (no DONE marker)");
  std::ifstream in(dir / "metrics.csv");
  if (!in) throw std::runtime_error("missing " + (dir / "metrics.csv").string());
  RunRecord r;
  r.dir = dir;
  std::getline(in, r.metrics_header);
  const std::vector<std::string> cols = split(r.metrics_header, ',');
  const auto col = [&](const std::string& name) {
    const auto it = std::find(cols.begin(), cols.end(), name);
    if (it == cols.end()) throw std::runtime_error(dir.string() + ": metrics.csv has no column " + name);
    return static_cast<std::size_t>(it - cols.begin());
  };
  const std::size_t ret_col = col("mean_meta_return"), steps_col = col("env_steps");
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> f = split(line, ',');
    if (f.size() != cols.size()) throw std::runtime_error(dir.string() + ": malformed metrics row");
    r.returns.push_back(std::stod(f[ret_col]));
    r.env_steps.push_back(std::stod(f[steps_col]));
  }
  if (r.returns.empty()) throw std::runtime_error(dir.string() + ": metrics.csv has no rows");
  r.final_window_return = final_window_mean(r.returns);
  return r;
}

std::vector<fs::path> find_runs(const fs::path& dir) {
  if (fs::exists(dir / "metrics.csv")) return {dir};
  std::vector<fs::path> out;
  if (fs::is_directory(dir))
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_directory() && entry.path().filename().string().rfind("seed_", 0) == 0) out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw std::runtime_error("no runs found in " + dir.string());
  return out;
}

TTestResult compare(const MethodSummary& a, const MethodSummary& b) { return two_sample_ttest(a.finals, b.finals); }

Report build_report(std::vector<MethodSummary> methods, double alpha) {
  if (methods.empty()) throw std::invalid_argument("report needs at least one method");
  Report r;
  r.alpha = alpha;
  for (MethodSummary& m : methods) {
    if (m.finals.empty())
      for (const RunRecord& run : m.runs) m.finals.push_back(run.final_window_return);
    if (m.finals.empty()) throw std::invalid_argument("method " + m.name + " has no completed runs");
    m.mean = mean(m.finals);
    m.stderr_ = standard_error(m.finals);
  }
  r.methods = std::move(methods);
  for (std::size_t i = 1; i < r.methods.size(); ++i)
    if (r.methods[i].mean > r.methods[r.best].mean) r.best = i;
  const MethodSummary& best = r.methods[r.best];
  for (std::size_t i = 0; i < r.methods.size(); ++i) {
    MethodSummary& m = r.methods[i];
    if (i == r.best || m.mean == best.mean) {
      m.best_equivalent = true;
    } else if (m.finals.size() >= 2 && best.finals.size() >= 2) {
      m.best_equivalent = compare(m, best).p >= alpha;
    }
  }
  for (std::size_t i = 0; i < r.methods.size(); ++i)
    for (std::size_t j = i + 1; j < r.methods.size(); ++j)
      if (r.methods[i].finals.size() >= 2 && r.methods[j].finals.size() >= 2)
        r.pairs.push_back({r.methods[i].name, r.methods[j].name, compare(r.methods[i], r.methods[j])});
  return r;
}

Report build_report(const std::vector<fs::path>& method_dirs, double alpha) {
  std::vector<MethodSummary> methods;
  std::string header;
  for (const fs::path& d : method_dirs) {
    MethodSummary m;
    m.name = fs::path(d).lexically_normal().filename().string();
    if (m.name.empty()) m.name = fs::path(d).lexically_normal().parent_path().filename().string();
    for (const fs::path& run : find_runs(d)) {
      RunRecord rec = load_run(run);
      if (header.empty()) header = rec.metrics_header;
      if (rec.metrics_header != header)
        throw std::runtime_error("mismatched metric schemas: " + run.string() + " has '" + rec.metrics_header +
                                 "', expected '" + header + "'");
      m.runs.push_back(std::move(rec));
    }
    methods.push_back(std::move(m));
  }
  return build_report(std::move(methods), alpha);
}

std::string results_csv(const Report& r) {
  std::string s = "method,n,mean,stderr,best_equivalent,p_vs_best\n";
  const MethodSummary& best = r.methods[r.best];
  for (std::size_t i = 0; i < r.methods.size(); ++i) {
    const MethodSummary& m = r.methods[i];
    std::string p = "";
    if (i == r.best) p = "1";
    else if (m.finals.size() >= 2 && best.finals.size() >= 2) p = format_double(compare(m, best).p);
    s += m.name + "," + std::to_string(m.finals.size()) + "," + format_double(m.mean) + "," +
         format_double(m.stderr_) + "," + (m.best_equivalent ? "1" : "0") + "," + p + "\n";
  }
  return s;
}

std::string results_markdown(const Report& r) {
  std::string s = "| method | n | final meta-return |\n|---|---|---|\n";
  for (const MethodSummary& m : r.methods) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.2f ± %.2f", m.mean, m.stderr_);
    const std::string cell = m.best_equivalent ? std::string("**") + buf + "**" : std::string(buf);
    s += "| " + m.name + " | " + std::to_string(m.finals.size()) + " | " + cell + " |\n";
  }
  char foot[128];
  std::snprintf(foot, sizeof foot, "\nBold: not significantly different from the best mean (two-tailed t-test, p >= %g).\n",
                r.alpha);
  return s + foot;
}

std::string ttests_csv(const Report& r) {
  std::string s = "method_a,method_b,t,dof,p\n";
  for (const PairTest& p : r.pairs)
    s += p.a + "," + p.b + "," + format_double(p.test.t) + "," + format_double(p.test.dof) + "," +
         format_double(p.test.p) + "\n";
  return s;
}

std::string learning_curves_svg(const Report& r, std::size_t max_points) {
  struct Curve {
    std::vector<double> x, mid, lo, hi;
  };
  std::vector<Curve> curves;
  double xmax = 0.0, ymin = INFINITY, ymax = -INFINITY;
  for (const MethodSummary& m : r.methods) {
    Curve c;
    std::size_t len = 0;
    if (!m.runs.empty()) {
      len = m.runs.front().returns.size();
      for (const RunRecord& run : m.runs) len = std::min(len, run.returns.size());
    }
    const std::size_t bins = std::max<std::size_t>(1, std::min(max_points, len));
    for (std::size_t b = 0; b < bins && len > 0; ++b) {
      const std::size_t lo = b * len / bins, hi = std::max(lo + 1, (b + 1) * len / bins);
      std::vector<double> per_seed;
      for (const RunRecord& run : m.runs) {
        double acc = 0.0;
        for (std::size_t k = lo; k < hi; ++k) acc += run.returns[k];
        per_seed.push_back(acc / static_cast<double>(hi - lo));
      }
      const double mu = mean(per_seed), se = standard_error(per_seed);
      c.x.push_back(m.runs.front().env_steps[hi - 1]);
      c.mid.push_back(mu);
      c.lo.push_back(mu - se);
      c.hi.push_back(mu + se);
      xmax = std::max(xmax, c.x.back());
      ymin = std::min(ymin, mu - se);
      ymax = std::max(ymax, mu + se);
    }
    curves.push_back(std::move(c));
  }
  if (!std::isfinite(ymin)) ymin = 0.0, ymax = 1.0;
  if (ymax - ymin < 1e-9) ymin -= 0.5, ymax += 0.5;
  if (xmax <= 0.0) xmax = 1.0;
  const double W = 640, H = 400, L = 60, R = 160, T = 20, B = 40;
  const auto px = [&](double x) { return L + x / xmax * (W - L - R); };
  const auto py = [&](double y) { return T + (ymax - y) / (ymax - ymin) * (H - T - B); };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
    << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << " " << H << "\">\n"
    << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n"
    << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n"
    << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 8 << "\" text-anchor=\"middle\" font-size=\"12\">env steps ("
    << format_double(xmax) << " max)</text>\n"
    << "<text x=\"" << L - 6 << "\" y=\"" << T + 10 << "\" text-anchor=\"end\" font-size=\"10\">"
    << format_double(ymax) << "</text>\n"
    << "<text x=\"" << L - 6 << "\" y=\"" << H - B << "\" text-anchor=\"end\" font-size=\"10\">" << format_double(ymin)
    << "</text>\n";
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const Curve& c = curves[i];
    const char* colour = palette[i % 10];
    if (!c.x.empty()) {
      s << "<polygon class=\"band\" fill=\"" << colour << "\" fill-opacity=\"0.2\" stroke=\"none\" points=\"";
      for (std::size_t k = 0; k < c.x.size(); ++k) s << px(c.x[k]) << "," << py(c.hi[k]) << " ";
      for (std::size_t k = c.x.size(); k-- > 0;) s << px(c.x[k]) << "," << py(c.lo[k]) << " ";
      s << "\"/>\n";
    }
    s << "<polyline class=\"curve\" fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t k = 0; k < c.x.size(); ++k) s << px(c.x[k]) << "," << py(c.mid[k]) << " ";
    s << "\"><title>" << xml_escape(r.methods[i].name) << "</title></polyline>\n";
    s << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 14 * (i + 1) << "\" font-size=\"11\" fill=\"" << colour
      << "\">" << xml_escape(r.methods[i].name) << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void write_report(const Report& r, const fs::path& out) {
  fs::create_directories(out);
  write_file(out / "results.csv", results_csv(r));
  write_file(out / "results.md", results_markdown(r));
  write_file(out / "ttests.csv", ttests_csv(r));
  write_file(out / "learning_curves.svg", learning_curves_svg(r));
}

std::vector<SweepCell> aggregate_sweep(const std::vector<SweepRow>& rows) {
  std::vector<SweepCell> cells;
  std::vector<std::vector<double>> values;
  for (const SweepRow& row : rows) {
    std::size_t i = 0;
    while (i < cells.size() && !(cells[i].architecture == row.architecture && cells[i].size == row.size &&
                                 cells[i].init == row.init))
      ++i;
    if (i == cells.size()) {
      cells.push_back({row.architecture, row.size, row.init, 0, 0.0, 0.0, row.parameter_count});
      values.emplace_back();
    }
    values[i].push_back(row.final_window_return);
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    cells[i].n = values[i].size();
    cells[i].mean = mean(values[i]);
    cells[i].stderr_ = standard_error(values[i]);
  }
  return cells;
}

std::string sweep_rows_csv(const std::vector<SweepRow>& rows) {
  std::string s = "architecture,size,init,seed,final_window_return,parameter_count\n";
  for (const SweepRow& r : rows)
    s += r.architecture + "," + r.size + "," + r.init + "," + std::to_string(r.seed) + "," +
         format_double(r.final_window_return) + "," + std::to_string(r.parameter_count) + "\n";
  return s;
}

std::string sweep_summary_csv(const std::vector<SweepCell>& cells) {
  std::string s = "architecture,size,init,n_seeds,mean,stderr,parameter_count\n";
  for (const SweepCell& c : cells)
    s += c.architecture + "," + c.size + "," + c.init + "," + std::to_string(c.n) + "," + format_double(c.mean) +
         "," + format_double(c.stderr_) + "," + std::to_string(c.parameter_count) + "\n";
  return s;
}

}  // namespace hypermeta::harness
