#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "condmkv/config.hpp"
#include "condmkv/errors.hpp"
#include "condmkv/experiments.hpp"
#include "condmkv/metrics.hpp"
#include "condmkv/report.hpp"
#include "condmkv/simulate.hpp"

namespace py = pybind11;
using namespace condmkv;

namespace {

py::dict report_dict(const cli::Report& r) {
  py::list checks;
  for (const auto& c : r.checks) {
    py::dict d;
    d["id"] = c.id;
    d["what"] = c.what;
    d["value"] = c.value;
    d["lo"] = c.lo;
    d["hi"] = c.hi;
    d["pass"] = c.pass;
    checks.append(d);
  }
  py::dict series;
  for (const auto& s : r.series) series[py::str(s.name)] = py::make_tuple(s.x, s.y, s.yerr);
  py::dict out;
  out["experiment"] = r.experiment;
  out["criterion"] = r.criterion;
  out["seed"] = r.seed;
  out["checks"] = checks;
  out["series"] = series;
  out["all_pass"] = r.all_pass();
  out["summary"] = cli::render_summary(r);
  return out;
}

cli::Report run(const cli::ExperimentConfig& base, std::optional<std::uint64_t> seed, int workers) {
  cli::ExperimentConfig c = base;
  if (seed) c.seed = *seed;
  c.workers = workers;
  py::gil_scoped_release release;
  return cli::run_experiment(c);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Conditional McKean-Vlasov particle experiments";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<PreconditionError>(m, "PreconditionError", PyExc_RuntimeError);
  py::register_exception<SolverError>(m, "SolverError", PyExc_RuntimeError);

  m.def("experiments", [] {
    std::vector<std::tuple<std::string, std::string, std::string>> out;
    for (const auto& e : cli::registry()) out.emplace_back(e.criterion, e.name, e.description);
    return out;
  }, "(criterion, name, description) for every registered experiment.");

  m.def("run_config", [](const std::string& path, std::optional<std::uint64_t> seed, int workers) {
    return report_dict(run(cli::load_config(path), seed, workers));
  }, py::arg("path"), py::arg("seed") = py::none(), py::arg("workers") = 1,
     "Run the experiment described by an INI file.");

  m.def("run_text", [](const std::string& text, std::optional<std::uint64_t> seed, int workers) {
    return report_dict(run(cli::parse_config(text), seed, workers));
  }, py::arg("text"), py::arg("seed") = py::none(), py::arg("workers") = 1,
     "Run an experiment from INI text.");

  m.def("w1", [](std::vector<double> a, std::vector<double> b) { return metrics::w1_1d(a, b); },
        py::arg("a"), py::arg("b"), "Exact W1 between two empirical laws on the line.");

  m.def("sampling_tv", [](long long N, long long k) {
    const auto s = metrics::sampling_tv_bound(N, k);
    return py::make_tuple(s.exact, s.bound);
  }, py::arg("N"), py::arg("k"), "Exact total variation and its k(k-1)/(2N) bound.");

  m.def("counterexample_amplitude", [](double eps, double T, int steps, std::uint64_t seed) {
    RngStream rng(seed, {0, 0, 0, Purpose::common_noise});
    return sim::run_counterexample(eps, TimeGrid(T, steps), rng).amplitude;
  }, py::arg("eps"), py::arg("T"), py::arg("steps"), py::arg("seed") = 0);
}
