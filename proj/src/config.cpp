#include "condmkv/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace condmkv::cli {
namespace {

namespace pt = boost::property_tree;

template <typename T>
T parse_scalar(const std::string& key, const std::string& text) {
  std::istringstream is(text);
  T v{};
  is >> v;
  std::string rest;
  if (is.fail() || (is >> rest)) throw ConfigError("config: cannot parse " + key + " = '" + text + "'");
  return v;
}

template <typename T>
std::vector<T> parse_vector(const std::string& key, const std::string& text) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw ConfigError("config: empty entry in " + key);
    out.push_back(parse_scalar<T>(key, item.substr(b, e - b + 1)));
  }
  if (out.empty()) throw ConfigError("config: empty list for " + key);
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += format_number(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

}  // namespace

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

SimConfig ExperimentConfig::sim() const {
  SimConfig c;
  c.sigma = sigma;
  c.sigma0 = sigma0;
  c.grid = TimeGrid(T, steps);
  c.init = make_initial_law(init);
  c.drift = make_drift(drift, c.init.dim());
  c.k = k;
  c.N = N_list.empty() ? std::max(1, k) : N_list.front();
  c.seed = seed;
  return c;
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::echo() const {
  std::vector<std::pair<std::string, std::string>> e;
  e.emplace_back("name", name);
  e.emplace_back("seed", std::to_string(seed));
  e.emplace_back("T", format_number(T));
  e.emplace_back("steps", std::to_string(steps));
  e.emplace_back("sigma", format_number(sigma));
  e.emplace_back("sigma0", format_number(sigma0));
  e.emplace_back("drift", drift);
  e.emplace_back("init", init);
  if (!N_list.empty()) e.emplace_back("N", join(N_list));
  e.emplace_back("k", std::to_string(k));
  e.emplace_back("reps", std::to_string(reps));
  e.emplace_back("ref_reps", std::to_string(ref_reps));
  if (!h_list.empty()) e.emplace_back("h", join(h_list));
  if (!steps_list.empty()) e.emplace_back("steps_list", join(steps_list));
  e.emplace_back("eps", format_number(eps));
  e.emplace_back("dy", format_number(dy));
  e.emplace_back("configs", std::to_string(configs));
  e.emplace_back("M_bl", format_number(bl_cap()));
  e.emplace_back("slices", std::to_string(slices));
  e.emplace_back("bootstrap", std::to_string(bootstrap));
  return e;
}

ExperimentConfig parse_config(const std::string& text) {
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.message() + " at line " + std::to_string(e.line()));
  }
  ExperimentConfig c;
  const std::set<std::string> sections{"experiment", "model", "run", "metric"};
  for (const auto& [section, body] : tree) {
    if (!sections.count(section)) throw ConfigError("config: unknown section [" + section + "]");
    for (const auto& [key, node] : body) {
      const std::string v = node.get_value<std::string>();
      const std::string where = section + "." + key;
      if (section == "experiment" && key == "name") {
        c.name = v;
      } else if (section == "experiment" && key == "seed") {
        c.seed = parse_scalar<std::uint64_t>(where, v);
      } else if (section == "model" && key == "T") {
        c.T = parse_scalar<double>(where, v);
      } else if (section == "model" && key == "steps") {
        c.steps = parse_scalar<int>(where, v);
      } else if (section == "model" && key == "sigma") {
        c.sigma = parse_scalar<double>(where, v);
      } else if (section == "model" && key == "sigma0") {
        c.sigma0 = parse_scalar<double>(where, v);
      } else if (section == "model" && key == "drift") {
        c.drift = v;
      } else if (section == "model" && key == "init") {
        c.init = v;
      } else if (section == "run" && key == "N") {
        c.N_list = parse_vector<int>(where, v);
      } else if (section == "run" && key == "k") {
        c.k = parse_scalar<int>(where, v);
      } else if (section == "run" && key == "reps") {
        c.reps = parse_scalar<int>(where, v);
      } else if (section == "run" && key == "ref_reps") {
        c.ref_reps = parse_scalar<int>(where, v);
      } else if (section == "run" && key == "h") {
        c.h_list = parse_vector<double>(where, v);
      } else if (section == "run" && key == "steps_list") {
        c.steps_list = parse_vector<int>(where, v);
      } else if (section == "run" && key == "eps") {
        c.eps = parse_scalar<double>(where, v);
      } else if (section == "run" && key == "dy") {
        c.dy = parse_scalar<double>(where, v);
      } else if (section == "run" && key == "configs") {
        c.configs = parse_scalar<int>(where, v);
      } else if (section == "metric" && key == "M_bl") {
        c.M_bl = parse_scalar<double>(where, v);
      } else if (section == "metric" && key == "slices") {
        c.slices = parse_scalar<int>(where, v);
      } else if (section == "metric" && key == "bootstrap") {
        c.bootstrap = parse_scalar<int>(where, v);
      } else {
        throw ConfigError("config: unknown key " + where);
      }
    }
  }
  if (c.name.empty()) throw ConfigError("config: experiment.name is required");
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void apply_environment(ExperimentConfig& config) {
  if (const char* seed = std::getenv("CONDMKV_SEED"); seed != nullptr && *seed != '\0') {
    config.seed = parse_scalar<std::uint64_t>("CONDMKV_SEED", seed);
  }
  if (const char* out = std::getenv("CONDMKV_OUT"); out != nullptr && *out != '\0') {
    config.out_dir = out;
  }
}

void validate(const ExperimentConfig& c) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ConfigError("config: " + field + " " + why);
  };
  if (!(c.T > 0.0)) fail("model.T", "must be positive");
  if (c.steps < 1) fail("model.steps", "must be at least 1");
  if (!(c.sigma >= 0.0)) fail("model.sigma", "must be nonnegative");
  if (!(c.sigma0 > 0.0)) fail("model.sigma0", "must be positive");
  if (c.k < 1) fail("run.k", "must be at least 1");
  if (c.reps < 1) fail("run.reps", "must be at least 1");
  if (c.ref_reps < 1) fail("run.ref_reps", "must be at least 1");
  for (int N : c.N_list) {
    if (N < 1) fail("run.N", "entries must be at least 1");
    if (c.k > N) fail("run.k", "must not exceed any N");
  }
  for (double h : c.h_list) {
    if (!(h >= 0.0)) fail("run.h", "entries must be nonnegative");
  }
  for (int s : c.steps_list) {
    if (s < 1) fail("run.steps_list", "entries must be at least 1");
  }
  if (!(c.eps >= 0.0)) fail("run.eps", "must be nonnegative");
  if (!(c.dy > 0.0)) fail("run.dy", "must be positive");
  if (c.configs < 1) fail("run.configs", "must be at least 1");
  if (c.M_bl && !(*c.M_bl > 0.0)) fail("metric.M_bl", "must be positive");
  if (c.slices < 1) fail("metric.slices", "must be at least 1");
  if (c.bootstrap < 0) fail("metric.bootstrap", "must be nonnegative");
  // Parse the model strings now so bad names fail before compute.
  (void)c.sim();
}

}  // namespace condmkv::cli
