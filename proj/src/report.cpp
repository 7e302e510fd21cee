#include "condmkv/report.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "condmkv/config.hpp"
#include "condmkv/errors.hpp"
#include "condmkv/metrics.hpp"

namespace condmkv::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

bool evaluate(const Check& c) { return c.lo <= c.value && c.value <= c.hi; }

std::string kind_name(CheckKind k) { return k == CheckKind::range ? "range" : "loglog_slope"; }

CheckKind kind_from(const std::string& s) {
  if (s == "range") return CheckKind::range;
  if (s == "loglog_slope") return CheckKind::loglog_slope;
  throw ConfigError("report: unknown check kind " + s);
}

/// JSON numbers cannot hold infinities; they are written as strings.
json number(double v) {
  if (std::isfinite(v)) return v;
  if (std::isnan(v)) return "nan";
  return v > 0 ? "inf" : "-inf";
}

double from_number(const json& j) {
  if (j.is_number()) return j.get<double>();
  const auto s = j.get<std::string>();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  return std::numeric_limits<double>::quiet_NaN();
}

std::string safe_name(const std::string& s) {
  std::string out = s;
  for (auto& ch : out) {
    if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-' || ch == '.')) ch = '_';
  }
  return out;
}

void write_file(const fs::path& p, const std::string& body) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << body;
  if (!out) throw std::runtime_error("write failed for " + p.string());
}

}  // namespace

bool Report::all_pass() const {
  if (checks.empty()) return false;
  for (const auto& c : checks) {
    if (!c.pass) return false;
  }
  return true;
}

Check& Report::add_range(std::string id, std::string what, double value, double lo, double hi) {
  Check c;
  c.id = std::move(id);
  c.what = std::move(what);
  c.kind = CheckKind::range;
  c.value = value;
  c.lo = lo;
  c.hi = hi;
  c.pass = evaluate(c);
  checks.push_back(std::move(c));
  return checks.back();
}

Check& Report::add_slope(std::string id, std::string what, const std::string& name, double lo, double hi) {
  const Series* s = find_series(name);
  if (s == nullptr) throw PreconditionError("report: no series named " + name);
  Check c;
  c.id = std::move(id);
  c.what = std::move(what);
  c.kind = CheckKind::loglog_slope;
  c.series = name;
  c.value = loglog_slope(*s);
  c.lo = lo;
  c.hi = hi;
  c.pass = evaluate(c);
  checks.push_back(std::move(c));
  return checks.back();
}

const Series* Report::find_series(const std::string& name) const {
  for (const auto& s : series) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

double loglog_slope(const Series& s) {
  std::vector<double> lx;
  std::vector<double> ly;
  for (std::size_t i = 0; i < s.x.size(); ++i) {
    lx.push_back(std::log(s.x[i]));
    ly.push_back(std::log(s.y[i]));
  }
  return metrics::least_squares(lx, ly).first;
}

// =============================================================================
// Rendering
// =============================================================================

std::string render_summary(const Report& r) {
  std::ostringstream os;
  os << "experiment: " << r.experiment << "\n";
  os << "criterion: " << r.criterion << "\n";
  os << "seed: " << r.seed << "\n";
  os << "\n[config]\n";
  for (const auto& [k, v] : r.config) os << k << " = " << v << "\n";
  os << "\n[results]\n";
  for (const auto& s : r.series) {
    os << "series " << s.name << "\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      os << "  " << format_number(s.x[i]) << " " << format_number(s.y[i]) << " "
         << format_number(i < s.yerr.size() ? s.yerr[i] : 0.0) << "\n";
    }
  }
  os << "\n[checks]\n";
  for (const auto& c : r.checks) {
    os << (c.pass ? "PASS: " : "FAIL: ") << c.id << "  " << c.what << "  value=" << format_number(c.value)
       << " range=[" << format_number(c.lo) << ", " << format_number(c.hi) << "]\n";
  }
  os << "\nverdict: " << (r.all_pass() ? "PASS" : "FAIL") << "\n";
  os << "\n[timing]\n";
  os << "wall_seconds = " << format_number(r.wall_seconds) << "\n";
  os << "workers = " << r.workers << "\n";
  return os.str();
}

std::string render_csv(const Report& r) {
  std::ostringstream os;
  os << "experiment,N,k,rep,value,se\n";
  for (const auto& row : r.rows) {
    os << row.experiment << ',' << row.N << ',' << row.k << ',' << row.rep << ',' << format_number(row.value)
       << ',' << format_number(row.se) << "\n";
  }
  return os.str();
}

std::vector<std::pair<std::string, std::string>> render_plotdata(const Report& r) {
  std::vector<std::pair<std::string, std::string>> files;
  for (const auto& s : r.series) {
    std::ostringstream os;
    os << "# " << s.name << ": x y yerr\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      os << format_number(s.x[i]) << ' ' << format_number(s.y[i]) << ' '
         << format_number(i < s.yerr.size() ? s.yerr[i] : 0.0) << "\n";
    }
    files.emplace_back(safe_name(s.name) + ".dat", os.str());
  }
  return files;
}

std::string render_json(const Report& r) {
  json j;
  j["experiment"] = r.experiment;
  j["criterion"] = r.criterion;
  j["seed"] = r.seed;
  json cfg = json::array();
  for (const auto& [k, v] : r.config) cfg.push_back({k, v});
  j["config"] = cfg;
  json series = json::array();
  for (const auto& s : r.series) {
    json xs = json::array();
    json ys = json::array();
    json es = json::array();
    for (double v : s.x) xs.push_back(number(v));
    for (double v : s.y) ys.push_back(number(v));
    for (double v : s.yerr) es.push_back(number(v));
    series.push_back({{"name", s.name}, {"x", xs}, {"y", ys}, {"yerr", es}});
  }
  j["series"] = series;
  json checks = json::array();
  for (const auto& c : r.checks) {
    checks.push_back({{"id", c.id},
                      {"what", c.what},
                      {"kind", kind_name(c.kind)},
                      {"value", number(c.value)},
                      {"lo", number(c.lo)},
                      {"hi", number(c.hi)},
                      {"series", c.series},
                      {"pass", c.pass}});
  }
  j["checks"] = checks;
  j["all_pass"] = r.all_pass();
  j["timing"] = {{"wall_seconds", r.wall_seconds}, {"workers", r.workers}};
  return j.dump(2) + "\n";
}

std::string strip_timing(const std::string& summary) {
  const auto pos = summary.find("\n[timing]");
  return pos == std::string::npos ? summary : summary.substr(0, pos + 1);
}

fs::path emit_report(const Report& r, const fs::path& dir) {
  const fs::path target = dir / safe_name(r.experiment);
  const fs::path tmp = dir / ("." + safe_name(r.experiment) + ".partial");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
  fs::remove_all(tmp, ec);
  try {
    fs::create_directories(tmp);
    write_file(tmp / "summary.txt", render_summary(r));
    write_file(tmp / "results.csv", render_csv(r));
    write_file(tmp / "report.json", render_json(r));
    fs::create_directories(tmp / "plotdata");
    for (const auto& [name, body] : render_plotdata(r)) write_file(tmp / "plotdata" / name, body);
    fs::remove_all(target);
    fs::rename(tmp, target);
  } catch (...) {
    fs::remove_all(tmp, ec);
    throw;
  }
  return target;
}

// =============================================================================
// Verification
// =============================================================================

VerifyResult verify_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("verify: cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("verify: malformed report: ") + e.what());
  }
  VerifyResult res;
  std::vector<Series> series;
  for (const auto& s : j.at("series")) {
    Series out;
    out.name = s.at("name").get<std::string>();
    for (const auto& v : s.at("x")) out.x.push_back(from_number(v));
    for (const auto& v : s.at("y")) out.y.push_back(from_number(v));
    series.push_back(std::move(out));
  }
  const auto& checks = j.at("checks");
  if (checks.empty()) {
    res.all_pass = false;
    res.lines.push_back("FAIL: report has no checks");
  }
  for (const auto& c : checks) {
    Check chk;
    chk.id = c.at("id").get<std::string>();
    chk.kind = kind_from(c.at("kind").get<std::string>());
    chk.value = from_number(c.at("value"));
    chk.lo = from_number(c.at("lo"));
    chk.hi = from_number(c.at("hi"));
    const bool claimed = c.at("pass").get<bool>();
    std::string note;
    if (chk.kind == CheckKind::loglog_slope) {
      const std::string name = c.at("series").get<std::string>();
      const Series* found = nullptr;
      for (const auto& s : series) {
        if (s.name == name) found = &s;
      }
      if (found == nullptr) {
        res.consistent = false;
        note = " (series " + name + " missing)";
      } else {
        const double slope = loglog_slope(*found);
        if (!(std::abs(slope - chk.value) <= 1e-9 * std::max(1.0, std::abs(slope)))) {
          res.consistent = false;
          note = " (recomputed slope " + format_number(slope) + " differs)";
        }
        chk.value = slope;
      }
    }
    const bool pass = evaluate(chk);
    if (pass != claimed) {
      res.consistent = false;
      note += " (recorded verdict disagrees)";
    }
    if (!pass) res.all_pass = false;
    res.lines.push_back(std::string(pass ? "PASS: " : "FAIL: ") + chk.id + " value=" + format_number(chk.value) +
                        " range=[" + format_number(chk.lo) + ", " + format_number(chk.hi) + "]" + note);
  }
  return res;
}

}  // namespace condmkv::cli
