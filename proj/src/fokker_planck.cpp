#include "condmkv/fokker_planck.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "condmkv/parallel.hpp"

namespace condmkv::fp {
namespace {

constexpr double kNegativeTolerance = 1e-12;
constexpr double kMassTolerance = 1e-6;

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

double biweight(double u) noexcept {
  const double a = 1.0 - u * u;
  return a > 0.0 ? a * a : 0.0;
}

/// Lattice nodes (j + 1/2) h within distance r of x, ordered so that
/// nodes k and count-1-k are mirror images when x is a lattice symmetry point.
struct Stencil {
  std::vector<double> nodes;
  std::vector<double> weights;
  double total = 0.0;
};

Stencil stencil(double x, double r, double h) {
  Stencil s;
  const auto lo = static_cast<long long>(std::floor((x - r) / h - 0.5));
  const auto hi = static_cast<long long>(std::ceil((x + r) / h - 0.5));
  for (long long j = lo; j <= hi; ++j) {
    const double p = (static_cast<double>(j) + 0.5) * h;
    const double w = biweight((x - p) / r);
    if (w > 0.0) {
      s.nodes.push_back(p);
      s.weights.push_back(w);
    }
  }
  // Outermost pairs first, so mirror terms meet before entering the total.
  const std::size_t n = s.weights.size();
  for (std::size_t a = 0, b = n; a < b; ++a) {
    --b;
    s.total += a == b ? s.weights[a] : s.weights[a] + s.weights[b];
  }
  return s;
}

}  // namespace

// =============================================================================
// Grids and densities
// =============================================================================

SpatialGrid1D::SpatialGrid1D(double half_width, double dy) {
  if (!(half_width > 0.0) || !(dy > 0.0) || !std::isfinite(half_width) || !std::isfinite(dy)) {
    throw ConfigError("spatial grid: half width and cell width must be positive");
  }
  const double cells = 2.0 * half_width / dy;
  const double rounded = std::round(cells);
  n_ = static_cast<int>(std::abs(cells - rounded) < 1e-9 * std::max(1.0, cells) ? rounded : std::ceil(cells));
  if (n_ < 1) n_ = 1;
  dy_ = dy;
  L_ = 0.5 * n_ * dy;
}

SpatialGrid1D SpatialGrid1D::covering(const InitialLaw& init, double bound, double horizon,
                                      double sigma, double dy) {
  if (init.dim() != 1) throw PreconditionError("spatial grid: the density solver is one-dimensional");
  const double L = init.centered_support_radius() + bound * horizon + 6.0 * sigma * std::sqrt(horizon);
  // Whole number of cells on each side keeps nested grids aligned.
  const double per_side = std::ceil(L / dy - 1e-9);
  return SpatialGrid1D(per_side * dy, dy);
}

double DensityField::mass() const {
  double m = 0.0;
  for (double v : values) m += v;
  return m * grid.dy();
}

double DensityField::mean() const {
  double m = 0.0;
  for (int i = 0; i < grid.cells(); ++i) m += grid.center(i) * values[sz(i)];
  return m * grid.dy();
}

double DensityField::variance() const {
  const double mu = mean();
  double v = 0.0;
  for (int i = 0; i < grid.cells(); ++i) {
    const double y = grid.center(i) - mu;
    v += y * y * values[sz(i)];
  }
  return v * grid.dy();
}

DensityField deposit_initial(const InitialLaw& init, const SpatialGrid1D& grid) {
  if (init.dim() != 1) throw PreconditionError("deposit_initial: one-dimensional laws only");
  DensityField rho;
  rho.grid = grid;
  rho.values.assign(sz(grid.cells()), 0.0);
  const Atoms atoms = init.to_atoms();
  const double mu = init.mean()[0];
  const double s = 2.0 * grid.dy();
  std::vector<double> bump(sz(grid.cells()));
  for (int a = 0; a < atoms.size(); ++a) {
    const double w = atoms.weights[sz(a)];
    if (w == 0.0) continue;
    const double c = atoms.point(a)[0] - mu;
    double total = 0.0;
    for (int i = 0; i < grid.cells(); ++i) {
      const double u = (grid.center(i) - c) / s;
      bump[sz(i)] = std::exp(-0.5 * u * u);
      total += bump[sz(i)];
    }
    if (!(total > 0.0)) throw ConfigError("deposit_initial: atom outside the spatial grid");
    for (int i = 0; i < grid.cells(); ++i) rho.values[sz(i)] += w * bump[sz(i)] / (total * grid.dy());
  }
  return rho;
}

double max_stable_dt(const SpatialGrid1D& grid, double sigma, double bound) {
  const double dy = grid.dy();
  const double rate = sigma * sigma / (dy * dy) + 2.0 * bound / dy;
  return rate > 0.0 ? 1.0 / rate : std::numeric_limits<double>::infinity();
}

double fp_mean_drift(const DensityField& density, double x0, const DriftSpec& drift) {
  double num = 0.0;
  double den = 0.0;
  for (int i = 0; i < density.grid.cells(); ++i) {
    const double r = density.values[sz(i)];
    num += drift(density.grid.center(i) + x0, x0) * r;
    den += r;
  }
  if (!(den > 0.0)) throw SolverError("density has no mass", den);
  return num / den;
}

void fp_step_inplace(DensityField& density, double x0, double sigma, const DriftSpec& drift,
                     double dt) {
  if (drift.dim() != 1) throw PreconditionError("fp_step: one-dimensional drifts only");
  const SpatialGrid1D& g = density.grid;
  const double admissible = max_stable_dt(g, sigma, drift.bound());
  if (!(dt > 0.0) || dt > admissible * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg << std::setprecision(6) << "fp_step: dt = " << dt << " violates the stability rule; need dt <= "
        << admissible;
    throw PreconditionError(msg.str());
  }
  const int n = g.cells();
  const double dy = g.dy();
  const double diff = 0.5 * sigma * sigma;
  auto& rho = density.values;
  const double mass_before = density.mass();

  std::vector<double> v(sz(n));
  double num = 0.0;
  double den = 0.0;
  for (int i = 0; i < n; ++i) {
    v[sz(i)] = drift(g.center(i) + x0, x0);
    num += v[sz(i)] * rho[sz(i)];
    den += rho[sz(i)];
  }
  const double c = num / den;
  for (auto& val : v) val -= c;

  // Face fluxes; faces 0 and n are closed.
  std::vector<double> flux(sz(n + 1), 0.0);
  for (int i = 0; i + 1 < n; ++i) {
    flux[sz(i + 1)] = std::max(v[sz(i)], 0.0) * rho[sz(i)] + std::min(v[sz(i + 1)], 0.0) * rho[sz(i + 1)] -
                      diff * (rho[sz(i + 1)] - rho[sz(i)]) / dy;
  }
  double lowest = 0.0;
  for (int i = 0; i < n; ++i) {
    rho[sz(i)] -= dt / dy * (flux[sz(i + 1)] - flux[sz(i)]);
    lowest = std::min(lowest, rho[sz(i)]);
  }
  if (lowest < -kNegativeTolerance) {
    throw SolverError("fp_step: density became negative", lowest);
  }
  const double mass_after = density.mass();
  if (!(std::abs(mass_after - mass_before) <= kMassTolerance)) {
    throw SolverError("fp_step: mass drifted beyond the monitor tolerance", mass_after - mass_before);
  }
  density.time += dt;
}

DensityField fp_step(const DensityField& density, double x0, double sigma, const DriftSpec& drift,
                     double dt) {
  DensityField next = density;
  fp_step_inplace(next, x0, sigma, drift, dt);
  return next;
}

// =============================================================================
// Co-evolution
// =============================================================================

std::pair<double, double> LimitRecordB::terminal_mean() const {
  const auto n = static_cast<double>(paths.size());
  double mean = 0.0;
  for (const auto& p : paths) mean += p.x0.back();
  mean /= n;
  double ss = 0.0;
  for (const auto& p : paths) ss += (p.x0.back() - mean) * (p.x0.back() - mean);
  return {mean, paths.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0};
}

LimitPathB coevolve_one(const SimConfig& config, const SpatialGrid1D& space,
                        std::span<const double> dW0, const CoevolveOptions& opts) {
  const DriftSpec& drift = opts.drift_override != nullptr ? *opts.drift_override : config.drift;
  const int steps = config.grid.steps();
  const double dt = config.grid.dt();
  if (dW0.size() != sz(steps)) throw PreconditionError("coevolve: one common increment per step");
  LimitPathB out;
  out.x0.assign(sz(steps + 1), 0.0);
  out.bbar.assign(sz(steps + 1), 0.0);
  out.dW0.assign(dW0.begin(), dW0.end());
  DensityField rho = deposit_initial(config.init, space);
  auto snap = [&](int m) {
    if (std::find(opts.snapshot_nodes.begin(), opts.snapshot_nodes.end(), m) != opts.snapshot_nodes.end()) {
      out.snapshots.push_back(rho);
    }
  };
  double x0 = config.init.mean()[0];
  for (int m = 0; m < steps; ++m) {
    out.x0[sz(m)] = x0;
    out.bbar[sz(m)] = fp_mean_drift(rho, x0, drift);
    snap(m);
    fp_step_inplace(rho, x0, config.sigma, drift, dt);
    rho.time = config.grid.time(m + 1);
    x0 += dt * out.bbar[sz(m)] + config.sigma0 * dW0[sz(m)];
  }
  out.x0[sz(steps)] = x0;
  out.bbar[sz(steps)] = fp_mean_drift(rho, x0, drift);
  snap(steps);
  return out;
}

LimitRecordB coevolve_limit_b(const SimConfig& config, int reps, const CoevolveOptions& opts) {
  config.validate();
  config.validate_case_b();
  if (config.dim() != 1) throw PreconditionError("coevolve: the density solver is one-dimensional");
  if (reps < 1) throw ConfigError("coevolve: reps must be at least 1");
  const DriftSpec& drift = opts.drift_override != nullptr ? *opts.drift_override : config.drift;
  LimitRecordB rec;
  rec.grid = config.grid;
  rec.space = SpatialGrid1D::covering(config.init, drift.bound(), config.grid.horizon(), config.sigma, opts.dy);
  const double admissible = max_stable_dt(rec.space, config.sigma, drift.bound());
  if (config.grid.dt() > admissible * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg << std::setprecision(6) << "coevolve: time step " << config.grid.dt()
        << " violates the density stability rule; need dt <= " << admissible;
    throw ConfigError(msg.str());
  }
  rec.paths.resize(sz(reps));
  parallel_for(reps, opts.workers, [&](int r) {
    RngStream noise(config.seed, {opts.experiment, static_cast<std::uint64_t>(r), 0, Purpose::common_noise});
    const auto dW0 = brownian_increments(config.grid, 1, noise);
    rec.paths[sz(r)] = coevolve_one(config, rec.space, dW0, opts);
  });
  return rec;
}

PathBundle sample_conditional_copies(const SimConfig& config, const LimitPathB& limit, int k,
                                     std::uint64_t experiment, std::uint64_t replication) {
  if (k < 1) throw ConfigError("conditional copies: k must be at least 1");
  const int steps = config.grid.steps();
  if (limit.x0.size() != sz(steps + 1) || limit.bbar.size() != sz(steps + 1)) {
    throw PreconditionError("conditional copies: limit record does not match the grid");
  }
  const double dt = config.grid.dt();
  const double mu = config.init.mean()[0];
  PathBundle out(config.grid, 1, k);
  for (int i = 0; i < k; ++i) {
    const auto idx = static_cast<std::uint64_t>(i);
    RngStream init(config.seed, {experiment, replication, idx, Purpose::initial});
    RngStream noise(config.seed, {experiment, replication, idx, Purpose::individual_noise});
    double xi = 0.0;
    config.init.sample_one(init, {&xi, 1});
    const auto dW = brownian_increments(config.grid, 1, noise);
    double y = xi - mu;
    out(i, 0) = y + limit.x0[0];
    for (int m = 0; m < steps; ++m) {
      const double z = limit.x0[sz(m)];
      y += dt * (config.drift(y + z, z) - limit.bbar[sz(m)]) + config.sigma * dW[sz(m)];
      out(i, m + 1) = y + limit.x0[sz(m + 1)];
    }
  }
  return out;
}

DeltaResult delta_moment_estimate(const SimConfig& config, std::span<const int> N_list, int reps,
                                  const DeltaOptions& opts) {
  config.validate();
  config.validate_case_b();
  if (config.dim() != 1) throw PreconditionError("delta estimate: one-dimensional only");
  if (N_list.empty() || reps < 1) throw ConfigError("delta estimate: need N values and reps >= 1");
  for (int N : N_list) {
    if (N < 1) throw ConfigError("delta estimate: N must be at least 1");
  }
  const int steps = config.grid.steps();
  const double dt = config.grid.dt();
  if (opts.probe_node > steps) throw ConfigError("delta estimate: probe node beyond the grid");
  const int maxN = *std::max_element(N_list.begin(), N_list.end());
  const auto n_count = N_list.size();
  const SpatialGrid1D space =
      SpatialGrid1D::covering(config.init, config.drift.bound(), config.grid.horizon(), config.sigma, opts.dy);
  const double admissible = max_stable_dt(space, config.sigma, config.drift.bound());
  if (config.grid.dt() > admissible * (1.0 + 1e-12)) {
    std::ostringstream msg;
    msg << std::setprecision(6) << "delta estimate: time step " << config.grid.dt()
        << " violates the density stability rule; need dt <= " << admissible;
    throw ConfigError(msg.str());
  }
  const double mu = config.init.mean()[0];

  std::vector<double> integrals(sz(reps) * n_count, 0.0);
  std::vector<double> probe(opts.probe_node >= 0 ? sz(reps) * sz(maxN) : 0, 0.0);
  std::vector<double> centers(opts.probe_node >= 0 ? sz(reps) : 0, 0.0);

  parallel_for(reps, opts.workers, [&](int r) {
    const auto rep = static_cast<std::uint64_t>(r);
    RngStream noise(config.seed, {opts.experiment, rep, 0, Purpose::common_noise});
    const auto dW0 = brownian_increments(config.grid, 1, noise);
    const LimitPathB lim = coevolve_one(config, space, dW0, opts);
    std::vector<double> sums(sz(steps), 0.0);
    std::size_t next = 0;
    std::vector<int> order(n_count);
    for (std::size_t j = 0; j < n_count; ++j) order[j] = static_cast<int>(j);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return N_list[sz(a)] < N_list[sz(b)]; });
    if (opts.probe_node >= 0) centers[sz(r)] = lim.bbar[sz(opts.probe_node)];
    for (int i = 0; i < maxN; ++i) {
      const auto idx = static_cast<std::uint64_t>(i);
      RngStream init(config.seed, {opts.experiment, rep, idx, Purpose::initial});
      RngStream inoise(config.seed, {opts.experiment, rep, idx, Purpose::individual_noise});
      double xi = 0.0;
      config.init.sample_one(init, {&xi, 1});
      const auto dW = brownian_increments(config.grid, 1, inoise);
      double y = xi - mu;
      for (int m = 0; m <= steps; ++m) {
        const double z = lim.x0[sz(m)];
        const double b = config.drift(y + z, z);
        if (m == opts.probe_node) probe[sz(r) * sz(maxN) + sz(i)] = b;
        if (m == steps) break;
        sums[sz(m)] += b;
        y += dt * (b - lim.bbar[sz(m)]) + config.sigma * dW[sz(m)];
      }
      while (next < n_count && N_list[sz(order[next])] == i + 1) {
        const int N = i + 1;
        double integral = 0.0;
        for (int m = 0; m < steps; ++m) {
          const double delta = lim.bbar[sz(m)] - sums[sz(m)] / N;
          integral += delta * delta * dt;
        }
        integrals[sz(r) * n_count + sz(order[next])] = integral;
        ++next;
      }
    }
  });

  DeltaResult res;
  res.stats.resize(n_count);
  for (std::size_t j = 0; j < n_count; ++j) {
    DeltaStats& s = res.stats[j];
    s.N = N_list[j];
    s.integral.resize(sz(reps));
    for (int r = 0; r < reps; ++r) s.integral[sz(r)] = integrals[sz(r) * n_count + j];
    double m1 = 0.0;
    double m2 = 0.0;
    for (double v : s.integral) {
      m1 += v;
      m2 += v * v;
    }
    m1 /= reps;
    m2 /= reps;
    double ss1 = 0.0;
    double ss2 = 0.0;
    for (double v : s.integral) {
      ss1 += (v - m1) * (v - m1);
      ss2 += (v * v - m2) * (v * v - m2);
    }
    const double denom = reps > 1 ? static_cast<double>(reps - 1) * reps : 1.0;
    s.mean = m1;
    s.se = std::sqrt(ss1 / denom);
    s.second_moment = m2;
    s.second_moment_se = std::sqrt(ss2 / denom);
    if (opts.probe_node >= 0) {
      std::vector<double> vals(sz(reps) * sz(s.N));
      for (int r = 0; r < reps; ++r) {
        std::copy_n(probe.begin() + static_cast<std::ptrdiff_t>(sz(r) * sz(maxN)), s.N,
                    vals.begin() + static_cast<std::ptrdiff_t>(sz(r) * sz(s.N)));
      }
      res.probe_values.push_back(std::move(vals));
    }
  }
  res.probe_centers = std::move(centers);
  return res;
}

// =============================================================================
// Mollification and density utilities
// =============================================================================

DriftSpec mollify_drift(const DriftSpec& drift, int n) {
  if (n < 1) throw ConfigError("mollify_drift: n must be at least 1");
  const int d = drift.dim();
  if (d != 1) throw PreconditionError("mollify_drift: one-dimensional drifts only");
  const double r = 1.0 / n;
  const double h = r / 8.0;
  DriftSpec base = drift;
  auto fn = [base, r, h](const double* x, const double* z, double* out) {
    const Stencil sx = stencil(x[0], r, h);
    const Stencil sz_ = stencil(z[0], r, h);
    const std::size_t nx = sx.nodes.size();
    double acc = 0.0;
    for (std::size_t l = 0; l < sz_.nodes.size(); ++l) {
      const double q = sz_.nodes[l];
      double inner = 0.0;
      for (std::size_t a = 0, b = nx; a < b; ++a) {
        --b;
        const double ta = sx.weights[a] * base(sx.nodes[a], q);
        inner += a == b ? ta : ta + sx.weights[b] * base(sx.nodes[b], q);
      }
      acc += sz_.weights[l] * inner;
    }
    out[0] = acc / (sx.total * sz_.total);
  };
  return DriftSpec(drift.name() + "_mollified_" + std::to_string(n), d, fn, drift.bound(),
                   4.0 * n * drift.bound(), Smoothness::lipschitz_x);
}

double w1_density(const DensityField& a, const DensityField& b) {
  if (!(a.grid == b.grid)) throw PreconditionError("w1_density: grids differ");
  const double dy = a.grid.dy();
  double ca = 0.0;
  double cb = 0.0;
  double total = 0.0;
  for (int i = 0; i < a.grid.cells(); ++i) {
    ca += a.values[sz(i)] * dy;
    cb += b.values[sz(i)] * dy;
    total += std::abs(ca - cb) * dy;
  }
  return total;
}

double l1_distance(const DensityField& a, const DensityField& b) {
  if (!(a.grid == b.grid)) throw PreconditionError("l1_distance: grids differ");
  double total = 0.0;
  for (int i = 0; i < a.grid.cells(); ++i) total += std::abs(a.values[sz(i)] - b.values[sz(i)]);
  return total * a.grid.dy();
}

DensityField coarsen(const DensityField& fine) {
  if (fine.grid.cells() % 2 != 0) throw PreconditionError("coarsen: odd number of cells");
  DensityField out;
  out.grid = SpatialGrid1D(fine.grid.half_width(), 2.0 * fine.grid.dy());
  out.time = fine.time;
  out.values.resize(sz(out.grid.cells()));
  for (int i = 0; i < out.grid.cells(); ++i) {
    out.values[sz(i)] = 0.5 * (fine.values[sz(2 * i)] + fine.values[sz(2 * i + 1)]);
  }
  return out;
}

void write_density_csv(std::ostream& os, std::span<const DensityField> snapshots) {
  os << "t,y,density\n";
  os << std::setprecision(12);
  for (const auto& s : snapshots) {
    for (int i = 0; i < s.grid.cells(); ++i) {
      os << s.time << ',' << s.grid.center(i) << ',' << s.values[sz(i)] << '\n';
    }
  }
}

}  // namespace condmkv::fp
