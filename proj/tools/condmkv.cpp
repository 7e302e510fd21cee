// Command-line driver: run named experiments, list the registry and
// re-check written reports.
//
//   condmkv run <config.ini> [--seed S] [--workers W] [--out DIR]
//   condmkv list
//   condmkv verify <report.json | report directory>
//
// Exit status: 0 when every verdict passes, 1 when some verdict fails,
// 2 for usage, configuration or runtime errors.

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "condmkv/config.hpp"
#include "condmkv/errors.hpp"
#include "condmkv/experiments.hpp"
#include "condmkv/report.hpp"

namespace {

namespace fs = std::filesystem;
using namespace condmkv::cli;

constexpr int kPass = 0;
constexpr int kFail = 1;
constexpr int kError = 2;

int do_run(const std::string& path, std::optional<std::uint64_t> seed, int workers,
           std::optional<std::string> out) {
  ExperimentConfig config = load_config(path);
  apply_environment(config);
  if (seed) config.seed = *seed;
  if (out) config.out_dir = *out;
  config.workers = workers;
  const Report report = run_experiment(config);
  const fs::path dir = emit_report(report, config.out_dir);
  std::cout << render_summary(report);
  std::cout << "report written to " << dir.string() << "\n";
  return report.all_pass() ? kPass : kFail;
}

int do_list() {
  for (const auto& info : registry()) {
    std::cout << info.criterion << "\t" << info.name << "\t" << info.description << "\n";
  }
  return kPass;
}

int do_verify(const std::string& path) {
  fs::path p = path;
  if (fs::is_directory(p)) p /= "report.json";
  const VerifyResult res = verify_report(p);
  for (const auto& line : res.lines) std::cout << line << "\n";
  if (!res.consistent) std::cout << "report is internally inconsistent\n";
  std::cout << "verdict: " << (res.all_pass && res.consistent ? "PASS" : "FAIL") << "\n";
  return res.all_pass && res.consistent ? kPass : kFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional McKean-Vlasov experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  int workers = 0;
  std::optional<std::string> out;
  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("config", config_path, "Experiment config (INI)")->required();
  run->add_option("--seed", seed, "Master seed (overrides the config and CONDMKV_SEED)");
  run->add_option("--workers", workers, "Worker threads (0: machine parallelism)")->check(CLI::NonNegativeNumber);
  run->add_option("--out", out, "Output directory (overrides CONDMKV_OUT)");

  app.add_subcommand("list", "List registered experiments");

  std::string report_path;
  auto* verify = app.add_subcommand("verify", "Re-check the verdicts of a written report");
  verify->add_option("report", report_path, "report.json or a report directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kError;
  }

  try {
    if (*run) return do_run(config_path, seed, workers, out);
    if (*verify) return do_verify(report_path);
    return do_list();
  } catch (const condmkv::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
  } catch (const condmkv::PreconditionError& e) {
    std::cerr << "precondition violated: " << e.what() << "\n";
  } catch (const condmkv::SolverError& e) {
    std::cerr << "solver error: " << e.what() << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
  }
  return kError;
}
