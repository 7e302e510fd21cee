#pragma once

// Experiment reports and their on-disk forms: a summary document, a CSV of
// per-replication values, gnuplot-ready series files and a JSON report that
// `verify` can re-check.

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace condmkv::cli {

struct Row {
  std::string experiment;
  long long N = 0;
  int k = 0;
  long long rep = 0;
  double value = 0.0;
  double se = 0.0;
};

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
  std::vector<double> yerr;
};

enum class CheckKind {
  /// pass iff lo <= value <= hi.
  range,
  /// value is the least-squares slope of log y on log x of `series`;
  /// pass iff lo <= value <= hi.
  loglog_slope,
};

struct Check {
  /// Criterion id, optionally with a suffix ("A4.tail").
  std::string id;
  std::string what;
  CheckKind kind = CheckKind::range;
  double value = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  std::string series;
  bool pass = false;
};

struct Report {
  std::string experiment;
  std::string criterion;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> config;
  std::vector<Row> rows;
  std::vector<Series> series;
  std::vector<Check> checks;
  double wall_seconds = 0.0;
  int workers = 1;

  bool all_pass() const;
  /// Adds a range check and evaluates it.
  Check& add_range(std::string id, std::string what, double value, double lo, double hi);
  /// Adds a slope check on an existing series and evaluates it.
  Check& add_slope(std::string id, std::string what, const std::string& series, double lo, double hi);
  const Series* find_series(const std::string& name) const;
};

/// Slope of log y against log x.
double loglog_slope(const Series& s);

enum class Format { summary, csv, plotdata, json };

std::string render_summary(const Report& report);
std::string render_csv(const Report& report);
std::string render_json(const Report& report);
/// One "x y yerr" file body per series, keyed by series name.
std::vector<std::pair<std::string, std::string>> render_plotdata(const Report& report);

/// Writes all formats into dir/<experiment>. Files are first written to a
/// sibling temporary directory which replaces the target only on success.
std::filesystem::path emit_report(const Report& report, const std::filesystem::path& dir);

/// Summary text up to, not including, the [timing] section.
std::string strip_timing(const std::string& summary);

struct VerifyResult {
  bool consistent = true;
  bool all_pass = true;
  std::vector<std::string> lines;
};

/// Re-derives every verdict of a JSON report from its own numbers.
VerifyResult verify_report(const std::filesystem::path& path);

}  // namespace condmkv::cli
