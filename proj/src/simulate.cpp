#include "condmkv/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "condmkv/parallel.hpp"

namespace condmkv::sim {
namespace {

constexpr double kMaxLogWeight = 700.0;

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

void check_inputs(const SimConfig& config, const ParticleInputs& in, bool individual) {
  const int d = config.dim();
  const int steps = config.grid.steps();
  if (in.N != config.N || in.dim != d) {
    throw PreconditionError("particle inputs do not match the configuration (N or dimension)");
  }
  if (in.x0.size() != sz(in.N * d) || in.common.size() != sz(steps * d)) {
    throw PreconditionError("particle inputs: wrong initial-point or common-noise size");
  }
  if (individual && in.individual.size() != sz(in.N) * sz(steps) * sz(d)) {
    throw PreconditionError("particle inputs: individual noise missing or of the wrong size");
  }
}

/// Particles grouped by identical inputs, groups in lexicographic order of
/// (initial point, individual increments). Sums over particles run over
/// groups in this order, so permuting particles permutes the output exactly.
struct Groups {
  std::vector<int> representative;
  std::vector<int> count;
  std::vector<int> group_of;
};

Groups canonical_groups(const ParticleInputs& in, bool individual) {
  const int d = in.dim;
  const std::size_t noise_len = individual ? in.individual.size() / sz(in.N) : 0;
  auto key_less = [&](int a, int b) {
    const double* xa = in.x0.data() + sz(a * d);
    const double* xb = in.x0.data() + sz(b * d);
    if (!std::equal(xa, xa + d, xb)) return std::lexicographical_compare(xa, xa + d, xb, xb + d);
    if (noise_len == 0) return false;
    const double* na = in.individual.data() + sz(a) * noise_len;
    const double* nb = in.individual.data() + sz(b) * noise_len;
    return std::lexicographical_compare(na, na + noise_len, nb, nb + noise_len);
  };
  std::vector<int> order(sz(in.N));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), key_less);
  Groups g;
  g.group_of.assign(sz(in.N), -1);
  for (std::size_t idx = 0; idx < order.size(); ++idx) {
    const int i = order[idx];
    if (idx == 0 || key_less(order[idx - 1], i)) {
      g.representative.push_back(i);
      g.count.push_back(0);
    }
    ++g.count.back();
    g.group_of[sz(i)] = static_cast<int>(g.count.size()) - 1;
  }
  return g;
}

ParticleRun run_system(SystemKind kind, const SimConfig& config, ParticleInputs inputs) {
  config.validate();
  if (kind == SystemKind::case_b) {
    config.validate_case_b();
  } else {
    config.validate_case_a();
  }
  const bool individual = kind == SystemKind::case_b;
  check_inputs(config, inputs, individual);

  const int N = config.N;
  const int d = config.dim();
  const int steps = config.grid.steps();
  const double dt = config.grid.dt();
  const Groups groups = canonical_groups(inputs, individual);
  const int G = static_cast<int>(groups.count.size());

  ParticleRun run;
  run.kind = kind;
  run.config = config;
  run.x0_path = PathBundle(config.grid, d, 1);
  run.group_paths = PathBundle(config.grid, d, G);
  run.group_of = groups.group_of;
  run.group_count = groups.count;

  std::vector<double> state(sz(G * d));
  for (int g = 0; g < G; ++g) {
    std::copy_n(inputs.x0.begin() + groups.representative[sz(g)] * d, d, state.begin() + g * d);
  }
  std::vector<double> x0(sz(d));
  auto group_mean = [&](const std::vector<double>& per_group, std::vector<double>& out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (int g = 0; g < G; ++g) {
      for (int c = 0; c < d; ++c) out[sz(c)] += groups.count[sz(g)] * per_group[sz(g * d + c)];
    }
    for (auto& v : out) v /= N;
  };
  if (kind == SystemKind::natural) {
    group_mean(state, x0);
  } else {
    const auto mu = config.init.mean();
    std::copy(mu.begin(), mu.end(), x0.begin());
  }

  std::vector<double> drift_vals(sz(G * d));
  std::vector<double> mean_drift(sz(d));
  auto record = [&](int m) {
    std::copy(x0.begin(), x0.end(), run.x0_path.at(0, m).begin());
    for (int g = 0; g < G; ++g) std::copy_n(state.begin() + g * d, d, run.group_paths.at(g, m).begin());
  };
  record(0);

  const double s0 = config.sigma0;
  const double s = config.sigma;
  for (int m = 0; m < steps; ++m) {
    const double* dw0 = inputs.common.data() + sz(m * d);
    for (int g = 0; g < G; ++g) config.drift(state.data() + g * d, x0.data(), drift_vals.data() + g * d);
    if (kind != SystemKind::natural) group_mean(drift_vals, mean_drift);
    for (int g = 0; g < G; ++g) {
      const double* dwi = individual ? inputs.individual.data() +
                                           (sz(groups.representative[sz(g)]) * sz(steps) + sz(m)) * sz(d)
                                     : nullptr;
      for (int c = 0; c < d; ++c) {
        double& v = state[sz(g * d + c)];
        v += dt * drift_vals[sz(g * d + c)] + s0 * dw0[c];
        if (dwi != nullptr) v += s * dwi[c];
      }
    }
    if (kind == SystemKind::natural) {
      group_mean(state, x0);
    } else {
      for (int c = 0; c < d; ++c) x0[sz(c)] += dt * mean_drift[sz(c)] + s0 * dw0[c];
    }
    record(m + 1);
  }
  run.inputs = std::move(inputs);
  return run;
}

ParticleInputs inputs_for(const SimConfig& config, std::uint64_t rep, const RunOptions& opts,
                          bool individual) {
  config.validate();
  return draw_particle_inputs(config, opts.experiment, rep, individual);
}

std::pair<double, double> mean_se(std::span<const double> v) {
  const auto n = static_cast<double>(v.size());
  if (v.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

flow::YField limit_field(const Atoms& atoms, std::span<const double> mean, const PathBundle& x0,
                         const DriftSpec& drift, const flow::FlowOptions& fopts) {
  return flow::solve_weighted(flow::FlowVariant::mu0_map, atoms.dim, atoms.points, atoms.weights,
                              mean, x0, drift, fopts);
}

/// Y(., x) of a field for a point that may or may not be one of its atoms,
/// as a (node, component) block.
std::vector<double> trajectory(const flow::YField& field, std::span<const double> x,
                               const DriftSpec& drift) {
  const int u = field.find_distinct(x);
  if (u < 0) return flow::flow_at(field, x, drift);
  const int d = field.dim();
  std::vector<double> out(sz(field.grid().nodes() * d));
  for (int m = 0; m <= field.last_node(); ++m) {
    const auto y = field.distinct_value(u, m);
    std::copy(y.begin(), y.end(), out.begin() + m * d);
  }
  return out;
}

}  // namespace

// =============================================================================
// Particle systems
// =============================================================================

ParticleInputs draw_particle_inputs(const SimConfig& config, std::uint64_t experiment,
                                    std::uint64_t replication, bool with_individual_noise) {
  const int d = config.dim();
  const int N = config.N;
  if (N < 1) throw ConfigError("particle inputs: N must be at least 1");
  ParticleInputs in;
  in.N = N;
  in.dim = d;
  in.x0.resize(sz(N * d));
  for (int i = 0; i < N; ++i) {
    RngStream rng(config.seed, {experiment, replication, static_cast<std::uint64_t>(i), Purpose::initial});
    config.init.sample_one(rng, {in.x0.data() + sz(i * d), sz(d)});
  }
  RngStream common(config.seed, {experiment, replication, 0, Purpose::common_noise});
  in.common = brownian_increments(config.grid, d, common);
  if (with_individual_noise) {
    const std::size_t block = sz(config.grid.steps()) * sz(d);
    in.individual.resize(sz(N) * block);
    for (int i = 0; i < N; ++i) {
      RngStream rng(config.seed,
                    {experiment, replication, static_cast<std::uint64_t>(i), Purpose::individual_noise});
      const auto inc = brownian_increments(config.grid, d, rng);
      std::copy(inc.begin(), inc.end(), in.individual.begin() + static_cast<std::ptrdiff_t>(sz(i) * block));
    }
  }
  return in;
}

ParticleRun run_natural(const SimConfig& config, ParticleInputs inputs) {
  return run_system(SystemKind::natural, config, std::move(inputs));
}
ParticleRun run_natural(const SimConfig& config, std::uint64_t replication, const RunOptions& opts) {
  return run_natural(config, inputs_for(config, replication, opts, false));
}

ParticleRun run_prepared(const SimConfig& config, ParticleInputs inputs) {
  return run_system(SystemKind::prepared, config, std::move(inputs));
}
ParticleRun run_prepared(const SimConfig& config, std::uint64_t replication, const RunOptions& opts) {
  return run_prepared(config, inputs_for(config, replication, opts, false));
}

ParticleRun run_case_b(const SimConfig& config, ParticleInputs inputs) {
  return run_system(SystemKind::case_b, config, std::move(inputs));
}
ParticleRun run_case_b(const SimConfig& config, std::uint64_t replication, const RunOptions& opts) {
  return run_case_b(config, inputs_for(config, replication, opts, true));
}

PathBundle ParticleRun::particle_paths() const {
  const int d = group_paths.dim();
  const int nodes = group_paths.grid().nodes();
  PathBundle out(group_paths.grid(), d, N());
  for (int i = 0; i < N(); ++i) {
    const auto src = group_paths.path(group_of[sz(i)]);
    std::copy(src.begin(), src.end(), out.values().begin() + static_cast<std::ptrdiff_t>(sz(i) * sz(nodes) * sz(d)));
  }
  return out;
}

double scheme_identity_error(const ParticleRun& run) {
  const int N = run.N();
  const int d = run.group_paths.dim();
  const int nodes = run.config.grid.nodes();
  const auto mu = run.config.init.mean();
  const bool individual = run.kind == SystemKind::case_b;
  std::vector<double> x0_mean(sz(d), 0.0);
  for (int i = 0; i < N; ++i) {
    for (int c = 0; c < d; ++c) x0_mean[sz(c)] += run.inputs.x0[sz(i * d + c)];
  }
  for (auto& v : x0_mean) v /= N;
  std::vector<double> w_sum(sz(d), 0.0);
  double err = 0.0;
  for (int m = 0; m < nodes; ++m) {
    if (individual && m > 0) {
      for (int i = 0; i < N; ++i) {
        for (int c = 0; c < d; ++c) {
          w_sum[sz(c)] += run.inputs.individual[(sz(i) * sz(nodes - 1) + sz(m - 1)) * sz(d) + sz(c)];
        }
      }
    }
    for (int c = 0; c < d; ++c) {
      double mean = 0.0;
      for (int i = 0; i < N; ++i) mean += run.particle(i, m, c);
      mean /= N;
      double expected = mean;
      if (run.kind != SystemKind::natural) expected += mu[sz(c)] - x0_mean[sz(c)];
      if (individual) expected -= run.config.sigma * w_sum[sz(c)] / N;
      err = std::max(err, std::abs(run.x0_path(0, m, c) - expected));
    }
  }
  return err;
}

// =============================================================================
// Weighted ensembles
// =============================================================================

std::vector<double> WeightedEnsemble::weights() const {
  std::vector<double> w(log_weights.size());
  if (mode == Normalization::raw) {
    std::transform(log_weights.begin(), log_weights.end(), w.begin(), [](double l) { return std::exp(l); });
    return w;
  }
  const double top = log_weights.empty() ? 0.0 : *std::max_element(log_weights.begin(), log_weights.end());
  double total = 0.0;
  for (std::size_t r = 0; r < w.size(); ++r) {
    w[r] = std::exp(log_weights[r] - top);
    total += w[r];
  }
  for (auto& v : w) v /= total;
  return w;
}

double WeightedEnsemble::raw_weight_mean() const {
  std::vector<double> w(log_weights.size());
  std::transform(log_weights.begin(), log_weights.end(), w.begin(), [](double l) { return std::exp(l); });
  return mean_se(w).first;
}

double WeightedEnsemble::raw_weight_se() const {
  std::vector<double> w(log_weights.size());
  std::transform(log_weights.begin(), log_weights.end(), w.begin(), [](double l) { return std::exp(l); });
  return mean_se(w).second;
}

std::span<const double> WeightedEnsemble::terminal_of(int rep) const {
  const std::size_t block = sz(k + 1) * sz(dim);
  return {terminal.data() + sz(rep) * block, block};
}

double WeightedEnsemble::weighted_terminal_mean(int slot, int comp) const {
  const auto w = weights();
  double num = 0.0;
  double den = 0.0;
  for (int r = 0; r < reps(); ++r) {
    num += w[sz(r)] * terminal_of(r)[sz(slot * dim + comp)];
    den += w[sz(r)];
  }
  return mode == Normalization::raw ? num / reps() : num / den;
}

double girsanov_log_weight(const flow::YField& field, std::span<const double> dB, double sigma0) {
  const int d = field.dim();
  const int steps = field.last_node();
  if (dB.size() < sz(steps * d)) throw PreconditionError("girsanov weight: too few increments");
  const double dt = field.grid().dt();
  double stoch = 0.0;
  double quad = 0.0;
  for (int m = 0; m < steps; ++m) {
    const auto c = field.mean_drift(m);
    for (int j = 0; j < d; ++j) {
      const double u = c[sz(j)] / sigma0;
      stoch += u * dB[sz(m * d + j)];
      quad += u * u;
    }
  }
  const double log_z = stoch - 0.5 * quad * dt;
  if (!(std::abs(log_z) <= kMaxLogWeight)) {
    std::ostringstream msg;
    msg << "girsanov weight overflow (log-weight " << log_z
        << "); reduce T * |b|_inf^2 / sigma0^2";
    throw SolverError(msg.str(), log_z);
  }
  return log_z;
}

WeightedEnsemble sample_limit_case_a(const SimConfig& config, int k, int reps,
                                     const LimitOptions& opts) {
  config.validate();
  config.validate_case_a();
  if (k < 1) throw ConfigError("limit sampler: k must be at least 1");
  if (reps < 1) throw ConfigError("limit sampler: reps must be at least 1");
  const int d = config.dim();
  const int nodes = config.grid.nodes();
  const Atoms atoms = config.init.to_atoms();
  const auto mu = config.init.mean();

  WeightedEnsemble ens;
  ens.k = k;
  ens.dim = d;
  ens.grid = config.grid;
  ens.mode = opts.mode;
  ens.log_weights.assign(sz(reps), 0.0);
  const std::size_t block = sz(k + 1) * sz(d);
  ens.terminal.assign(sz(reps) * block, 0.0);
  if (opts.keep_paths) ens.paths.resize(sz(reps));

  parallel_for(reps, opts.workers, [&](int r) {
    const auto rep = static_cast<std::uint64_t>(r);
    RngStream noise(config.seed, {opts.experiment, rep, 0, Purpose::common_noise});
    const auto dB = brownian_increments(config.grid, d, noise);
    const PathBundle x0 = cumulative_path(config.grid, d, dB, mu, config.sigma0);
    const flow::YField field = limit_field(atoms, mu, x0, config.drift, opts.flow);
    ens.log_weights[sz(r)] = girsanov_log_weight(field, dB, config.sigma0);

    double* term = ens.terminal.data() + sz(r) * block;
    const auto x0_T = x0.at(0, nodes - 1);
    std::copy(x0_T.begin(), x0_T.end(), term);
    PathBundle tuple;
    if (opts.keep_paths) {
      tuple = PathBundle(config.grid, d, k + 2);
      std::copy(x0.values().begin(), x0.values().end(), tuple.values().begin());
    }
    std::vector<double> xi(sz(d));
    for (int i = 0; i < k; ++i) {
      RngStream init(config.seed, {opts.experiment, rep, static_cast<std::uint64_t>(i), Purpose::initial});
      config.init.sample_one(init, xi);
      const auto y = trajectory(field, xi, config.drift);
      for (int c = 0; c < d; ++c) {
        term[sz((i + 1) * d + c)] = x0_T[sz(c)] + y[sz((nodes - 1) * d + c)];
      }
      if (opts.keep_paths) {
        for (int m = 0; m < nodes; ++m) {
          for (int c = 0; c < d; ++c) tuple(i + 1, m, c) = x0(0, m, c) + y[sz(m * d + c)];
        }
      }
    }
    if (opts.keep_paths) {
      // W0 = B - int c / sigma0 dt, with B = (X0 - mu) / sigma0.
      const double dt = config.grid.dt();
      for (int c = 0; c < d; ++c) tuple(k + 1, 0, c) = 0.0;
      for (int m = 0; m + 1 < nodes; ++m) {
        const auto cm = field.mean_drift(m);
        for (int c = 0; c < d; ++c) {
          tuple(k + 1, m + 1, c) = tuple(k + 1, m, c) + dB[sz(m * d + c)] - dt * cm[sz(c)] / config.sigma0;
        }
      }
      ens.paths[sz(r)] = std::move(tuple);
    }
  });
  return ens;
}

// =============================================================================
// Gap estimator
// =============================================================================

std::vector<GapEstimate> prepared_vs_limit_gap(const SimConfig& config, int k, double M_bl,
                                               int reps, std::span<const int> N_list,
                                               const RunOptions& opts) {
  config.validate_case_a();
  if (N_list.empty()) throw ConfigError("gap estimator: empty N list");
  if (!(M_bl > 0.0)) throw ConfigError("gap estimator: M must be positive");
  if (reps < 1) throw ConfigError("gap estimator: reps must be at least 1");
  if (k < 1) throw ConfigError("gap estimator: k must be at least 1");
  for (int N : N_list) {
    if (N < 1) throw ConfigError("gap estimator: N must be at least 1");
    if (k > N) throw ConfigError("gap estimator: k must not exceed N");
  }
  const int d = config.dim();
  const int nodes = config.grid.nodes();
  const int maxN = *std::max_element(N_list.begin(), N_list.end());
  const auto n_count = N_list.size();
  const Atoms atoms = config.init.to_atoms();
  const auto mu = config.init.mean();

  // (rep, N-index) blocks of per-rep value, tv part, path part, flow gap.
  std::vector<double> vals(sz(reps) * n_count * 4, 0.0);

  parallel_for(reps, opts.workers, [&](int r) {
    const auto rep = static_cast<std::uint64_t>(r);
    std::vector<double> x0v(sz(maxN * d));
    for (int i = 0; i < maxN; ++i) {
      RngStream init(config.seed, {opts.experiment, rep, static_cast<std::uint64_t>(i), Purpose::initial});
      config.init.sample_one(init, {x0v.data() + sz(i * d), sz(d)});
    }
    RngStream noise(config.seed, {opts.experiment, rep, 0, Purpose::common_noise});
    const auto dB = brownian_increments(config.grid, d, noise);
    const PathBundle x0 = cumulative_path(config.grid, d, dB, mu, config.sigma0);
    const flow::YField lim = limit_field(atoms, mu, x0, config.drift, {});
    const double z_inf = std::exp(girsanov_log_weight(lim, dB, config.sigma0));
    std::vector<std::vector<double>> lim_traj;
    for (int i = 0; i < k; ++i) {
      lim_traj.push_back(trajectory(lim, {x0v.data() + sz(i * d), sz(d)}, config.drift));
    }
    for (std::size_t n = 0; n < n_count; ++n) {
      const int N = N_list[n];
      const flow::YField prep = flow::solve_y_prepared({x0v.data(), sz(N * d)}, mu, x0, config.drift);
      const double z_n = std::exp(girsanov_log_weight(prep, dB, config.sigma0));
      double sup_sum = 0.0;
      double first_gap = 0.0;
      for (int i = 0; i < k; ++i) {
        double sup = 0.0;
        for (int m = 0; m < nodes; ++m) {
          const auto y = prep.value(i, m);
          double dist2 = 0.0;
          for (int c = 0; c < d; ++c) {
            const double diff = y[sz(c)] - lim_traj[sz(i)][sz(m * d + c)];
            dist2 += diff * diff;
          }
          sup = std::max(sup, std::sqrt(dist2));
        }
        sup_sum += sup;
        if (i == 0) first_gap = sup;
      }
      const double tv = 0.5 * M_bl * std::abs(z_n - z_inf);
      const double path = z_inf * std::min(M_bl, sup_sum);
      double* out = vals.data() + (sz(r) * n_count + n) * 4;
      out[0] = tv + path;
      out[1] = tv;
      out[2] = path;
      out[3] = first_gap;
    }
  });

  std::vector<GapEstimate> result(n_count);
  for (std::size_t n = 0; n < n_count; ++n) {
    GapEstimate& g = result[n];
    g.N = N_list[n];
    g.per_rep.resize(sz(reps));
    g.flow_gap.resize(sz(reps));
    double tv = 0.0;
    double path = 0.0;
    for (int r = 0; r < reps; ++r) {
      const double* v = vals.data() + (sz(r) * n_count + n) * 4;
      g.per_rep[sz(r)] = v[0];
      tv += v[1];
      path += v[2];
      g.flow_gap[sz(r)] = v[3];
    }
    const auto [mean, se] = mean_se(g.per_rep);
    g.value = mean;
    g.se = se;
    g.tv_term = tv / reps;
    g.path_term = path / reps;
  }
  return result;
}

GapEstimate prepared_vs_limit_gap(const SimConfig& config, int k, double M_bl, int reps,
                                  const RunOptions& opts) {
  const int N = config.N;
  return prepared_vs_limit_gap(config, k, M_bl, reps, std::span<const int>(&N, 1), opts).front();
}

// =============================================================================
// Reflection coupling
// =============================================================================

std::pair<double, double> CouplingResult::tail(double t) const {
  std::vector<double> ind(tau.size());
  for (std::size_t i = 0; i < tau.size(); ++i) ind[i] = !merged[i] || tau[i] > t ? 1.0 : 0.0;
  return mean_se(ind);
}

std::pair<double, double> CouplingResult::mean_tau() const { return mean_se(tau); }

CouplingResult reflection_coupling(double h, const TimeGrid& grid, int reps, std::uint64_t seed,
                                   const RunOptions& opts) {
  if (!(h >= 0.0) || !std::isfinite(h)) throw ConfigError("reflection coupling: h must be >= 0");
  if (reps < 1) throw ConfigError("reflection coupling: reps must be at least 1");
  CouplingResult res;
  res.h = h;
  res.grid = grid;
  res.tau.assign(sz(reps), 0.0);
  res.merged.assign(sz(reps), 1);
  res.pair = PathBundle(grid, 1, 2);
  const int steps = grid.steps();
  const double dt = grid.dt();
  const double sdt = std::sqrt(dt);
  const double level = 0.5 * h;

  auto simulate = [&](int r, bool keep) {
    if (h == 0.0) {
      if (keep) {
        RngStream rng(seed, {opts.experiment, static_cast<std::uint64_t>(r), 0, Purpose::coupling});
        double b = 0.0;
        for (int m = 0; m < steps; ++m) {
          b += sdt * rng.normal();
          res.pair(0, m + 1) = b;
          res.pair(1, m + 1) = b;
        }
      }
      return 0.0;
    }
    RngStream rng(seed, {opts.experiment, static_cast<std::uint64_t>(r), 0, Purpose::coupling});
    double b = 0.0;
    int hit = -1;
    if (keep) {
      res.pair(0, 0) = 0.0;
      res.pair(1, 0) = h;
    }
    for (int m = 0; m < steps; ++m) {
      const double next = b + sdt * rng.normal();
      if (hit < 0) {
        bool crossed = next >= level;
        if (!crossed) {
          const double p = std::exp(-2.0 * (level - b) * (level - next) / dt);
          crossed = rng.uniform() < p;
        }
        if (crossed) hit = m + 1;
      }
      b = next;
      if (keep) {
        res.pair(0, m + 1) = b;
        res.pair(1, m + 1) = hit >= 0 ? b : h - b;
      }
      if (hit >= 0 && !keep) break;
    }
    if (hit < 0) res.merged[sz(r)] = 0;
    return hit < 0 ? grid.horizon() : grid.time(hit);
  };

  res.tau[0] = simulate(0, true);
  parallel_for(reps - 1, opts.workers, [&](int i) { res.tau[sz(i + 1)] = simulate(i + 1, false); });
  return res;
}

// =============================================================================
// Counterexample
// =============================================================================

double counterexample_phi(double y) noexcept { return std::clamp(2.0 * y, -1.0, 1.0); }

double smoothed_sign(double v, double eps) noexcept {
  if (eps <= 0.0) return drifts::sign(v);
  return std::clamp(v / eps, -1.0, 1.0);
}

CounterexampleRecord run_counterexample(double eps, const TimeGrid& grid,
                                        std::span<const double> dW) {
  if (!(eps >= 0.0)) throw ConfigError("counterexample: eps must be >= 0");
  const int steps = grid.steps();
  if (dW.size() != sz(steps)) throw PreconditionError("counterexample: one increment per step");
  CounterexampleRecord rec;
  rec.eps = eps;
  rec.grid = grid;
  rec.paths = PathBundle(grid, 1, 2);
  rec.D.assign(sz(grid.nodes()), 0.0);
  // Noise-free coordinates X^j - W0 keep D free of cancellation error.
  double y1 = 1.0;
  double y2 = -1.0;
  double w = 0.0;
  const double dt = grid.dt();
  rec.paths(0, 0) = y1;
  rec.paths(1, 0) = y2;
  rec.D[0] = y1 - y2 - 2.0;
  for (int m = 0; m < steps; ++m) {
    const double gap = y1 - y2;
    const double s = smoothed_sign(0.25 * gap * gap - 1.0, eps);
    const double b1 = -s * counterexample_phi(y1 + w);
    const double b2 = -s * counterexample_phi(y2 + w);
    y1 += dt * b1;
    y2 += dt * b2;
    w += dW[sz(m)];
    rec.paths(0, m + 1) = y1 + w;
    rec.paths(1, m + 1) = y2 + w;
    rec.D[sz(m + 1)] = y1 - y2 - 2.0;
  }
  const int nodes = grid.nodes();
  for (int m = 0; m < nodes; ++m) {
    if (rec.D[sz(m)] <= 0.0) {
      rec.hit = m;
      break;
    }
  }
  rec.exit = nodes;
  if (rec.hit >= 0) {
    for (int m = rec.hit; m < nodes; ++m) {
      if (rec.paths(0, m) < 0.5 || rec.paths(1, m) > -0.5) {
        rec.exit = m;
        break;
      }
    }
  }
  if (rec.hit < 0 || rec.exit - rec.hit < 2) {
    rec.amplitude = std::numeric_limits<double>::quiet_NaN();
  } else {
    const auto [lo, hi] = std::minmax_element(rec.D.begin() + rec.hit, rec.D.begin() + rec.exit);
    rec.amplitude = *hi - *lo;
  }
  return rec;
}

CounterexampleRecord run_counterexample(double eps, const TimeGrid& grid, RngStream& rng) {
  const auto dW = brownian_increments(grid, 1, rng);
  return run_counterexample(eps, grid, dW);
}

std::vector<double> reduced_counterexample(double h, int steps) {
  std::vector<double> D(sz(steps + 1), 0.0);
  for (int m = 0; m < steps; ++m) D[sz(m + 1)] = D[sz(m)] - 2.0 * h * drifts::sign(D[sz(m)]);
  return D;
}

std::vector<double> coarsen_increments(std::span<const double> fine, int dim, int factor) {
  if (factor < 1 || fine.size() % (sz(dim) * sz(factor)) != 0) {
    throw PreconditionError("coarsen_increments: length not divisible by the factor");
  }
  const std::size_t coarse_steps = fine.size() / sz(dim) / sz(factor);
  std::vector<double> out(coarse_steps * sz(dim), 0.0);
  for (std::size_t m = 0; m < coarse_steps; ++m) {
    for (int j = 0; j < factor; ++j) {
      for (int c = 0; c < dim; ++c) out[m * sz(dim) + sz(c)] += fine[(m * sz(factor) + sz(j)) * sz(dim) + sz(c)];
    }
  }
  return out;
}

}  // namespace condmkv::sim
