// Runs every registered experiment from <configs>/<name>.ini and prints one
// verdict line per criterion, followed by its individual checks.
//
//   acceptance <configs dir> [report dir]

#include <chrono>
#include <filesystem>
#include <iostream>
#include <string>

#include "condmkv/config.hpp"
#include "condmkv/experiments.hpp"
#include "condmkv/report.hpp"

namespace fs = std::filesystem;
using namespace condmkv::cli;

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <configs dir> [report dir]\n";
    return 2;
  }
  const fs::path configs = argv[1];
  const fs::path out = argc > 2 ? fs::path(argv[2]) : fs::path();

  int failed = 0;
  for (const auto& info : registry()) {
    const auto start = std::chrono::steady_clock::now();
    Report report;
    std::string error;
    try {
      ExperimentConfig config = load_config((configs / (info.name + ".ini")).string());
      config.workers = 0;
      report = run_experiment(config);
      if (!out.empty()) emit_report(report, out);
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool pass = error.empty() && report.all_pass();
    if (!pass) ++failed;
    std::cout << (pass ? "PASS: " : "FAIL: ") << info.criterion << "  " << info.name << "  ("
              << format_number(secs) << " s)\n";
    if (!error.empty()) std::cout << "    error: " << error << "\n";
    for (const auto& c : report.checks) {
      std::cout << "    " << (c.pass ? "PASS " : "FAIL ") << c.id << "  " << c.what
                << "  value=" << format_number(c.value) << " range=[" << format_number(c.lo) << ", "
                << format_number(c.hi) << "]\n";
    }
    std::cout.flush();
  }
  std::cout << (failed == 0 ? "all criteria pass" : std::to_string(failed) + " criteria failed") << "\n";
  return failed == 0 ? 0 : 1;
}
