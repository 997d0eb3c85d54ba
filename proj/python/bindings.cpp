#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hypermeta/errors.hpp"
#include "hypermeta/harness/commands.hpp"
#include "hypermeta/layout.hpp"
#include "hypermeta/stats.hpp"

namespace py = pybind11;
namespace hm = hypermeta;
namespace hh = hypermeta::harness;

namespace {

hh::CommandOptions options(std::optional<hh::fs::path> out, bool force, std::size_t parallel) {
  hh::CommandOptions o;
  o.out = std::move(out);
  o.force = force;
  o.parallel = parallel;
  return o;
}

hh::RunConfig config_from(const std::string& text) {
  hh::RunConfig c = hh::parse_config(text);
  c.validate();
  return c;
}

py::dict seed_run(const hh::SeedRun& r) {
  py::dict d;
  d["seed"] = r.seed;
  d["dir"] = r.dir;
  d["ok"] = r.ok;
  d["reused"] = r.reused;
  d["final_window_return"] = r.final_window_return;
  d["parameter_count"] = r.parameter_count;
  d["error"] = r.error;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Hypernetwork meta-RL core";
  py::register_exception<hh::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<hm::RefusalError>(m, "RefusalError", PyExc_RuntimeError);

  m.def("code_version", &hh::code_version);
  m.def("normalize_config", [](const std::string& text) { return hh::serialize_config(config_from(text)); },
        py::arg("text"), "Parse, validate and re-serialize a YAML run config with every field explicit.");
  m.def("parameter_count", [](const std::string& text) { return hm::expected_parameter_count(config_from(text).agent_spec()); },
        py::arg("text") = "");

  m.def(
      "train",
      [](const std::string& text, std::optional<hh::fs::path> out, bool force, std::size_t parallel) {
        const hh::RunConfig c = config_from(text);
        hh::TrainSummary s;
        {
          py::gil_scoped_release release;
          s = hh::cmd_train(c, options(std::move(out), force, parallel));
        }
        py::list runs;
        for (const hh::SeedRun& r : s.runs) runs.append(seed_run(r));
        return runs;
      },
      py::arg("config") = "", py::arg("out") = py::none(), py::arg("force") = false, py::arg("parallel") = 1);

  m.def(
      "analyze_init",
      [](const std::string& text, std::optional<hh::fs::path> out, bool force) {
        const hh::AnalyzeSummary s = hh::cmd_analyze_init(config_from(text), options(std::move(out), force, 1));
        py::dict d;
        d["dir"] = s.dir;
        for (std::size_t i = 0; i < s.schemes.size(); ++i)
          d[py::str(s.schemes[i])] = py::make_tuple(s.pass_count[i], s.fail_count[i], s.seeds);
        return d;
      },
      py::arg("config") = "", py::arg("out") = py::none(), py::arg("force") = false,
      "Returns {scheme: (seeds in pass band, seeds outside fail band, seeds)} plus 'dir'.");

  m.def(
      "equivalence",
      [](const std::string& fault, std::size_t steps, std::uint64_t seed, const std::string& optimizer) {
        hm::EquivalenceConfig c;
        c.fault = hm::equivalence_fault_from_string(fault);
        c.steps = steps;
        c.optimizer = hm::optimizer_kind_from_string(optimizer);
        c.validate();
        return hm::equivalence_oracle(c, hm::Rng(seed).stream("equivalence")).max_abs_diff;
      },
      py::arg("fault") = "none", py::arg("steps") = 100, py::arg("seed") = 0, py::arg("optimizer") = "sgd",
      "Max |phi_i - theta_i| after each of `steps` paired updates (entry 0: before training).");

  m.def(
      "variance_probe",
      [](const std::string& scheme, const std::string& size, std::uint64_t seed) {
        hm::AgentSpec spec;
        spec.hidden = hm::named_widths(size);
        hm::VarianceProbeOptions opts;
        spec.embed_dim = opts.embed_dim;
        const hm::VarianceReport r =
            hm::variance_probe(hh::method_scheme(scheme), spec.base_spec(), hm::Rng(seed), opts);
        py::dict d;
        d["input_variance"] = r.input_variance;
        d["layer_variance"] = r.layer_variance;
        d["layer_ratio"] = r.layer_ratio;
        d["final_ratio"] = r.final_ratio();
        d["within_pass_band"] = r.within_pass_band({});
        d["outside_fail_band"] = r.outside_fail_band({});
        return d;
      },
      py::arg("scheme"), py::arg("size") = "XS", py::arg("seed") = 0);

  m.def(
      "sweep",
      [](const std::string& text, std::optional<hh::fs::path> out, bool force, std::size_t parallel) {
        const hh::RunConfig c = config_from(text);
        hh::SweepSummary s;
        {
          py::gil_scoped_release release;
          s = hh::cmd_sweep(c, options(std::move(out), force, parallel));
        }
        py::list cells;
        for (const hh::SweepCell& cell : s.cells) {
          py::dict d;
          d["architecture"] = cell.architecture;
          d["size"] = cell.size;
          d["init"] = cell.init;
          d["n"] = cell.n;
          d["mean"] = cell.mean;
          d["stderr"] = cell.stderr_;
          d["parameter_count"] = cell.parameter_count;
          cells.append(d);
        }
        return cells;
      },
      py::arg("config"), py::arg("out") = py::none(), py::arg("force") = false, py::arg("parallel") = 1);

  m.def(
      "report",
      [](const std::vector<hh::fs::path>& dirs, std::optional<hh::fs::path> out) {
        const hh::Report r = hh::cmd_report(dirs, options(std::move(out), false, 1));
        py::list rows;
        for (const hh::MethodSummary& ms : r.methods)
          rows.append(py::make_tuple(ms.name, ms.mean, ms.stderr_, ms.best_equivalent));
        return rows;
      },
      py::arg("dirs"), py::arg("out") = py::none(), "Rows of (method, mean, stderr, best_equivalent).");

  m.def(
      "ttest",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        const hm::TTestResult t = hm::two_sample_ttest(a, b);
        return py::make_tuple(t.t, t.dof, t.p);
      },
      py::arg("a"), py::arg("b"), "Pooled two-sample two-tailed t-test: (t, dof, p).");
}
