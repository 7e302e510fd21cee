#include "condmkv/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>

#include "condmkv/fokker_planck.hpp"
#include "condmkv/metrics.hpp"
#include "condmkv/parallel.hpp"
#include "condmkv/simulate.hpp"

namespace condmkv::cli {
namespace {

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<int> or_default(const std::vector<int>& v, std::vector<int> fallback) {
  return v.empty() ? fallback : v;
}

std::uint64_t tag(const ExperimentConfig& c, const std::string& sub = "") {
  return experiment_tag(sub.empty() ? c.name : c.name + "/" + sub);
}

sim::RunOptions run_opts(const ExperimentConfig& c, const std::string& sub = "") {
  sim::RunOptions o;
  o.experiment = tag(c, sub);
  o.workers = c.workers;
  return o;
}

std::string n_label(long long N) { return "N=" + std::to_string(N); }

void add_rep_rows(Report& r, long long N, int k, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    r.rows.push_back({r.experiment, N, k, static_cast<long long>(i), values[i], 0.0});
  }
}

// =============================================================================
// A1: flow-map gap of the well-prepared system
// =============================================================================

void lemvitl2_rate(const ExperimentConfig& c, Report& r) {
  const SimConfig s = c.sim();
  s.validate_case_a();
  const auto Ns = or_default(c.N_list, {64, 256, 1024, 4096});
  const int d = s.dim();
  const int nodes = s.grid.nodes();
  const int maxN = *std::max_element(Ns.begin(), Ns.end());
  const auto mu = s.init.mean();

  // One seeded common-noise path shared by every replication.
  RngStream noise(s.seed, {tag(c), 0, 0, Purpose::common_noise});
  const auto dB = brownian_increments(s.grid, d, noise);
  const PathBundle bx = cumulative_path(s.grid, d, dB, mu, s.sigma0);
  const flow::YField limit = flow::solve_y_field(s.init, bx, s.drift);

  std::vector<double> gaps(sz(c.reps) * Ns.size());
  parallel_for(c.reps, c.workers, [&](int rep) {
    std::vector<double> x0(sz(maxN * d));
    for (int i = 0; i < maxN; ++i) {
      RngStream init(s.seed, {tag(c), static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(i), Purpose::initial});
      s.init.sample_one(init, {x0.data() + sz(i * d), sz(d)});
    }
    const std::span<const double> x1(x0.data(), sz(d));
    const int u = limit.find_distinct(x1);
    const auto oracle = u >= 0 ? std::vector<double>() : flow::flow_at(limit, x1, s.drift);
    for (std::size_t n = 0; n < Ns.size(); ++n) {
      const flow::YField prep = flow::solve_y_prepared({x0.data(), sz(Ns[n] * d)}, mu, bx, s.drift);
      double sup = 0.0;
      for (int m = 0; m < nodes; ++m) {
        const auto y = prep.value(0, m);
        double d2 = 0.0;
        for (int j = 0; j < d; ++j) {
          const double ref = u >= 0 ? limit.distinct_value(u, m)[sz(j)] : oracle[sz(m * d + j)];
          d2 += (y[sz(j)] - ref) * (y[sz(j)] - ref);
        }
        sup = std::max(sup, std::sqrt(d2));
      }
      gaps[sz(rep) * Ns.size() + n] = sup;
    }
  });

  Series series{"flow_gap", {}, {}, {}};
  for (std::size_t n = 0; n < Ns.size(); ++n) {
    std::vector<double> v(sz(c.reps));
    for (int rep = 0; rep < c.reps; ++rep) v[sz(rep)] = gaps[sz(rep) * Ns.size() + n];
    const auto m = metrics::mean_se(v);
    series.x.push_back(Ns[n]);
    series.y.push_back(m.value);
    series.yerr.push_back(m.se);
    add_rep_rows(r, Ns[n], 1, v);
  }
  r.series.push_back(series);
  r.add_slope("A1", "slope of E sup|Y^{1,N} - Y| against N", "flow_gap", -0.65, -0.35);
}

// =============================================================================
// A2: coupled gap between the well-prepared system and the limit
// =============================================================================

void prepared_gap_rate(const ExperimentConfig& c, Report& r) {
  const SimConfig s = c.sim();
  const auto Ns = or_default(c.N_list, {64, 128, 256, 512, 1024, 2048, 4096});
  const auto est = sim::prepared_vs_limit_gap(s, c.k, c.bl_cap(), c.reps, Ns, run_opts(c));
  Series gap{"gap", {}, {}, {}};
  Series tv{"tv_term", {}, {}, {}};
  Series path{"path_term", {}, {}, {}};
  for (const auto& e : est) {
    gap.x.push_back(e.N);
    gap.y.push_back(e.value);
    gap.yerr.push_back(e.se);
    tv.x.push_back(e.N);
    tv.y.push_back(e.tv_term);
    tv.yerr.push_back(0.0);
    path.x.push_back(e.N);
    path.y.push_back(e.path_term);
    path.yerr.push_back(0.0);
    add_rep_rows(r, e.N, c.k, e.per_rep);
  }
  r.series.push_back(gap);
  r.series.push_back(tv);
  r.series.push_back(path);
  r.add_slope("A2", "slope of D(N) against N", "gap", -0.65, -0.35);
}

// =============================================================================
// A3: martingale property of the Girsanov weights
// =============================================================================

void girsanov_martingale(const ExperimentConfig& c, Report& r) {
  const SimConfig s = c.sim();
  const double budget = s.grid.horizon() * s.drift.bound() * s.drift.bound() / (s.sigma0 * s.sigma0);
  r.add_range("A3.budget", "T |b|^2 / sigma0^2", budget, 0.0, 1.0);
  sim::LimitOptions o;
  o.experiment = tag(c);
  o.workers = c.workers;
  const auto ens = sim::sample_limit_case_a(s, c.k, c.reps, o);
  const auto w = ens.weights();
  const double mean = ens.raw_weight_mean();
  const double se = ens.raw_weight_se();
  add_rep_rows(r, 0, c.k, w);
  r.series.push_back({"raw_weight_mean", {static_cast<double>(c.reps)}, {mean}, {se}});
  r.add_range("A3", "(mean Z - 1) / SE", se > 0.0 ? (mean - 1.0) / se : (mean == 1.0 ? 0.0 : kInf), -4.0, 4.0);
}

// =============================================================================
// A4: reflection coupling
// =============================================================================

void reflection_coupling(const ExperimentConfig& c, Report& r) {
  const auto hs = c.h_list.empty() ? std::vector<double>{0.1, 0.5, 1.0} : c.h_list;
  const TimeGrid grid(c.T, c.steps);
  double worst = -kInf;
  Series ratio{"mean_tau_over_h", {}, {}, {}};
  for (std::size_t j = 0; j < hs.size(); ++j) {
    const double h = hs[j];
    const auto res = sim::reflection_coupling(h, grid, c.reps, c.seed, run_opts(c, "h" + std::to_string(j)));
    Series tail{"tail_h" + format_number(h), {}, {}, {}};
    for (int m = 0; m < grid.nodes(); ++m) {
      const double t = grid.time(m);
      const auto [p, se] = res.tail(t);
      const double bound = t > 0.0 ? std::min(1.0, 2.0 * h / std::sqrt(2.0 * std::numbers::pi * t)) : 1.0;
      worst = std::max(worst, p - bound - 4.0 * se);
      tail.x.push_back(t);
      tail.y.push_back(p);
      tail.yerr.push_back(se);
    }
    r.series.push_back(tail);
    const auto [mt, mse] = res.mean_tau();
    if (h > 0.0) {
      ratio.x.push_back(h);
      ratio.y.push_back(mt / h);
      ratio.yerr.push_back(mse / h);
    }
    for (std::size_t i = 0; i < res.tau.size(); ++i) {
      r.rows.push_back({r.experiment, static_cast<long long>(j), 0, static_cast<long long>(i), res.tau[i], 0.0});
    }
  }
  r.series.push_back(ratio);
  r.add_range("A4.tail", "max_t P[tau >= t] - min(1, 2h/sqrt(2 pi t)) - 4 SE", worst, -kInf, 0.0);
  double variation = kInf;
  if (!ratio.y.empty()) {
    const auto [lo, hi] = std::minmax_element(ratio.y.begin(), ratio.y.end());
    variation = *hi > 0.0 ? (*hi - *lo) / *hi : kInf;
  }
  r.add_range("A4.linear", "(max - min) / max of E[tau] / h", variation, 0.0, 0.5);
}

// =============================================================================
// A5: Hoeffding moment bounds
// =============================================================================

void hoeffding(const ExperimentConfig& c, Report& r) {
  const auto Ns = or_default(c.N_list, {100, 1000});
  Series rad{"rademacher_q1", {}, {}, {}};
  for (int N : Ns) {
    std::vector<double> values(sz(c.reps) * sz(N));
    parallel_for(c.reps, c.workers, [&](int rep) {
      RngStream rng(c.seed, {tag(c, "rademacher"), static_cast<std::uint64_t>(rep), static_cast<std::uint64_t>(N),
                             Purpose::generic});
      for (int i = 0; i < N; ++i) values[sz(rep) * sz(N) + sz(i)] = (rng() >> 63) != 0 ? 1.0 : -1.0;
    });
    for (int q : {1, 2}) {
      const auto h = metrics::hoeffding_check(values, {}, c.reps, N, 1, 1.0, q);
      const double allowed = h.bound * (1.0 + (h.estimate > 0.0 ? 4.0 * h.se / h.estimate : 0.0));
      r.add_range("A5.rademacher." + n_label(N) + ".q" + std::to_string(q), "E|mean|^(2q) against q!(4/N)^q",
                  h.estimate, 0.0, allowed);
      if (q == 1) {
        rad.x.push_back(N);
        rad.y.push_back(h.estimate);
        rad.yerr.push_back(h.se);
      }
    }
  }
  r.series.push_back(rad);

  SimConfig s = c.sim();
  fp::DeltaOptions o;
  o.experiment = tag(c, "copies");
  o.workers = c.workers;
  o.dy = c.dy;
  o.probe_node = s.grid.steps() / 2;
  const auto res = fp::delta_moment_estimate(s, Ns, c.ref_reps, o);
  Series cop{"copies_q1", {}, {}, {}};
  for (std::size_t j = 0; j < Ns.size(); ++j) {
    const int N = Ns[j];
    for (int q : {1, 2}) {
      const auto h = metrics::hoeffding_check(res.probe_values[j], res.probe_centers, c.ref_reps, N, 1,
                                              s.drift.bound(), q);
      const double allowed = h.bound * (1.0 + (h.estimate > 0.0 ? 4.0 * h.se / h.estimate : 0.0));
      r.add_range("A5.copies." + n_label(N) + ".q" + std::to_string(q),
                  "E|mean b - bbar|^(2q) against q!(4|b|^2/N)^q", h.estimate, 0.0, allowed);
      if (q == 1) {
        cop.x.push_back(N);
        cop.y.push_back(h.estimate);
        cop.yerr.push_back(h.se);
      }
    }
  }
  r.series.push_back(cop);
}

// =============================================================================
// A6: Delta^N moment rate
// =============================================================================

void delta_rate(const ExperimentConfig& c, Report& r) {
  const SimConfig s = c.sim();
  const auto Ns = or_default(c.N_list, {100, 178, 316, 562, 1000});
  fp::DeltaOptions o;
  o.experiment = tag(c);
  o.workers = c.workers;
  o.dy = c.dy;
  const auto res = fp::delta_moment_estimate(s, Ns, c.reps, o);
  Series series{"delta_moment", {}, {}, {}};
  const double b2 = s.drift.bound() * s.drift.bound();
  for (const auto& st : res.stats) {
    series.x.push_back(st.N);
    series.y.push_back(st.mean);
    series.yerr.push_back(st.se);
    add_rep_rows(r, st.N, 1, st.integral);
    r.add_range("A6.bound." + n_label(st.N), "E int |Delta^N|^2 against 4 |b|^2 T / N + 4 SE", st.mean, 0.0,
                4.0 * b2 * s.grid.horizon() / st.N + 4.0 * st.se);
  }
  r.series.push_back(series);
  r.add_slope("A6", "slope of E int |Delta^N|^2 against N", "delta_moment", -1.15, -0.85);
}

// =============================================================================
// A7: case-B particle system against the density co-evolution
// =============================================================================

void case_b_crossval(const ExperimentConfig& c, Report& r) {
  SimConfig s = c.sim();
  s.N = c.N_list.empty() ? 4096 : c.N_list.front();
  fp::CoevolveOptions o;
  o.experiment = tag(c, "density");
  o.workers = c.workers;
  o.dy = c.dy;
  const auto lim = fp::coevolve_limit_b(s, c.ref_reps, o);
  const auto [m_ref, se_ref] = lim.terminal_mean();

  std::vector<double> x0T(sz(c.reps));
  const auto po = run_opts(c, "particles");
  parallel_for(c.reps, c.workers, [&](int rep) {
    sim::RunOptions single = po;
    single.workers = 1;
    const auto run = sim::run_case_b(s, static_cast<std::uint64_t>(rep), single);
    x0T[sz(rep)] = run.x0_path(0, s.grid.steps());
  });
  const auto part = metrics::mean_se(x0T);
  add_rep_rows(r, s.N, 1, x0T);
  for (std::size_t i = 0; i < lim.paths.size(); ++i) {
    r.rows.push_back({r.experiment, 0, 0, static_cast<long long>(i), lim.paths[i].x0.back(), 0.0});
  }
  r.series.push_back({"terminal_mean_x0", {0.0, static_cast<double>(s.N)}, {m_ref, part.value}, {se_ref, part.se}});
  const double combined = std::sqrt(se_ref * se_ref + part.se * part.se);
  r.add_range("A7", "|E X0_T (particles) - E X0_T (density)| / combined SE",
              std::abs(part.value - m_ref) / combined, 0.0, 4.0);
}

// =============================================================================
// A8: scheme identities on randomized configurations
// =============================================================================

SimConfig random_config(const ExperimentConfig& c, int index, bool case_b) {
  RngStream rng(c.seed, {tag(c), static_cast<std::uint64_t>(index), case_b ? 1u : 0u, Purpose::generic});
  auto pick = [&](int n) { return static_cast<int>(rng() % static_cast<std::uint64_t>(n)); };
  auto unif = [&](double a, double b) { return a + (b - a) * rng.uniform(); };
  SimConfig s;
  const int d = 1 + pick(2);
  s.N = 1 + pick(64);
  s.k = 1 + pick(s.N);
  s.grid = TimeGrid(unif(0.25, 2.0), 4 + pick(125));
  s.sigma0 = unif(0.5, 2.0);
  s.sigma = case_b ? unif(0.2, 2.0) : 0.0;
  s.seed = rng();
  std::vector<double> a(sz(d));
  std::vector<double> b(sz(d));
  switch (pick(3)) {
    case 0:
      for (int j = 0; j < d; ++j) {
        a[sz(j)] = unif(-2.0, 2.0);
        b[sz(j)] = unif(-2.0, 2.0);
      }
      s.init = InitialLaw::two_point(a, b, unif(0.1, 0.9));
      break;
    case 1: {
      std::vector<double> cov(sz(d * d), 0.0);
      for (int j = 0; j < d; ++j) {
        a[sz(j)] = unif(-1.0, 1.0);
        cov[sz(j * d + j)] = unif(0.2, 2.0);
      }
      s.init = InitialLaw::gaussian(a, cov);
      break;
    }
    default: {
      std::vector<double> pts(sz(3 * d));
      for (auto& p : pts) p = unif(-3.0, 3.0);
      const double w0 = unif(0.1, 0.5);
      const double w1 = unif(0.1, 0.4);
      s.init = InitialLaw::atoms(d, pts, {w0, w1, 1.0 - w0 - w1});
    }
  }
  const int choices = case_b ? 6 : 5;
  switch (pick(choices)) {
    case 0:
      s.drift = drifts::zero(d);
      break;
    case 1: {
      std::vector<double> cv(sz(d));
      for (auto& v : cv) v = unif(-1.0, 1.0);
      s.drift = drifts::constant(cv);
      break;
    }
    case 2:
      s.drift = drifts::tanh_gap(d);
      break;
    case 3:
      s.drift = drifts::neg_tanh_sum(d);
      break;
    case 4:
      s.drift = drifts::tanh_of_z(d);
      break;
    default:
      s.drift = drifts::sign_gap(d);
  }
  return s;
}

void scheme_identities(const ExperimentConfig& c, Report& r) {
  std::vector<double> err(sz(c.configs) * 2);
  parallel_for(c.configs, c.workers, [&](int i) {
    const SimConfig a = random_config(c, i, false);
    const SimConfig b = random_config(c, i, true);
    sim::RunOptions o = run_opts(c);
    o.workers = 1;
    err[sz(2 * i)] = sim::scheme_identity_error(sim::run_prepared(a, static_cast<std::uint64_t>(i), o));
    err[sz(2 * i + 1)] = sim::scheme_identity_error(sim::run_case_b(b, static_cast<std::uint64_t>(i), o));
  });
  Series prep{"prepared_identity_error", {}, {}, {}};
  Series caseb{"case_b_identity_error", {}, {}, {}};
  double worst = 0.0;
  for (int i = 0; i < c.configs; ++i) {
    prep.x.push_back(i);
    prep.y.push_back(err[sz(2 * i)]);
    prep.yerr.push_back(0.0);
    caseb.x.push_back(i);
    caseb.y.push_back(err[sz(2 * i + 1)]);
    caseb.yerr.push_back(0.0);
    worst = std::max({worst, err[sz(2 * i)], err[sz(2 * i + 1)]});
    r.rows.push_back({r.experiment, random_config(c, i, false).N, 0, i, err[sz(2 * i)], 0.0});
    r.rows.push_back({r.experiment, random_config(c, i, true).N, 1, i, err[sz(2 * i + 1)], 0.0});
  }
  r.series.push_back(prep);
  r.series.push_back(caseb);
  r.add_range("A8", "largest identity violation over nodes and configurations", worst, 0.0, 1e-12);
}

// =============================================================================
// A9: conditional-variance counterexample
// =============================================================================

void counterexample(const ExperimentConfig& c, Report& r) {
  auto levels = or_default(c.steps_list, {64, 128, 256, 512, 1024, 2048, 4096});
  std::sort(levels.begin(), levels.end());
  const int finest = levels.back();
  for (int s : levels) {
    if (finest % s != 0) throw ConfigError("config: run.steps_list entries must divide the largest one");
  }
  const std::size_t L = levels.size();
  std::vector<double> amp(sz(c.reps) * L);
  std::vector<double> cauchy(sz(c.reps) * (L - 1));
  parallel_for(c.reps, c.workers, [&](int rep) {
    RngStream rng(c.seed, {tag(c), static_cast<std::uint64_t>(rep), 0, Purpose::common_noise});
    const auto fine = brownian_increments(TimeGrid(c.T, finest), 1, rng);
    std::vector<std::vector<double>> smooth_D(L);
    for (std::size_t j = 0; j < L; ++j) {
      const TimeGrid g(c.T, levels[j]);
      const auto dW = sim::coarsen_increments(fine, 1, finest / levels[j]);
      amp[sz(rep) * L + j] = sim::run_counterexample(0.0, g, dW).amplitude;
      smooth_D[j] = sim::run_counterexample(c.eps, g, dW).D;
    }
    for (std::size_t j = 0; j + 1 < L; ++j) {
      const int f = levels[j + 1] / levels[j];
      double sup = 0.0;
      for (int m = 0; m <= levels[j]; ++m) {
        sup = std::max(sup, std::abs(smooth_D[j][sz(m)] - smooth_D[j + 1][sz(m * f)]));
      }
      cauchy[sz(rep) * (L - 1) + j] = sup;
    }
  });
  Series amplitude{"amplitude", {}, {}, {}};
  for (std::size_t j = 0; j < L; ++j) {
    std::vector<double> v;
    for (int rep = 0; rep < c.reps; ++rep) {
      const double a = amp[sz(rep) * L + j];
      r.rows.push_back({r.experiment, levels[j], 0, rep, a, 0.0});
      if (std::isfinite(a)) v.push_back(a);
    }
    const auto m = metrics::mean_se(v);
    amplitude.x.push_back(c.T / levels[j]);
    amplitude.y.push_back(v.empty() ? std::numeric_limits<double>::quiet_NaN() : m.value);
    amplitude.yerr.push_back(m.se);
  }
  r.series.push_back(amplitude);
  r.add_slope("A9.amplitude", "slope of the post-hit amplitude of D against dt", "amplitude", 0.9, 1.1);

  Series diffs{"smoothed_halving_sup_difference", {}, {}, {}};
  double worst_increase = -kInf;
  for (std::size_t j = 0; j + 1 < L; ++j) {
    std::vector<double> v(sz(c.reps));
    for (int rep = 0; rep < c.reps; ++rep) v[sz(rep)] = cauchy[sz(rep) * (L - 1) + j];
    const auto m = metrics::mean_se(v);
    diffs.x.push_back(c.T / levels[j]);
    diffs.y.push_back(m.value);
    diffs.yerr.push_back(m.se);
    if (j > 0) worst_increase = std::max(worst_increase, m.value - diffs.y[j - 1]);
  }
  r.series.push_back(diffs);
  r.add_range("A9.smoothed", "largest increase of successive-halving sup differences", worst_increase, -kInf, 0.0);
}

// =============================================================================
// A10: natural system against the weighted limit, sampling bound
// =============================================================================

void natural_chaos(const ExperimentConfig& c, Report& r) {
  SimConfig s = c.sim();
  const auto Ns = or_default(c.N_list, {64, 256, 1024});
  sim::LimitOptions lo;
  lo.experiment = tag(c, "limit");
  lo.workers = c.workers;
  const auto ens = sim::sample_limit_case_a(s, 1, c.ref_reps, lo);
  const int d = s.dim();
  const auto wl = ens.weights();
  std::vector<double> limit_pts(sz(c.ref_reps) * sz(2 * d));
  for (int i = 0; i < c.ref_reps; ++i) {
    const auto t = ens.terminal_of(i);
    std::copy(t.begin(), t.end(), limit_pts.begin() + static_cast<std::ptrdiff_t>(sz(i) * sz(2 * d)));
  }
  metrics::MetricParams mp;
  mp.slices = c.slices;
  mp.direction_seed = c.seed;

  Series w1{"sliced_w1", {}, {}, {}};
  for (std::size_t j = 0; j < Ns.size(); ++j) {
    s.N = Ns[j];
    s.k = 1;
    std::vector<double> pts(sz(c.reps) * sz(2 * d));
    const auto o = run_opts(c, n_label(Ns[j]));
    parallel_for(c.reps, c.workers, [&](int rep) {
      sim::RunOptions single = o;
      single.workers = 1;
      const auto run = sim::run_natural(s, static_cast<std::uint64_t>(rep), single);
      const int T = s.grid.steps();
      for (int q = 0; q < d; ++q) {
        pts[sz(rep) * sz(2 * d) + sz(q)] = run.x0_path(0, T, q);
        pts[sz(rep) * sz(2 * d) + sz(d + q)] = run.particle(0, T, q);
      }
    });
    const double value = metrics::w1_sliced(pts, limit_pts, 2 * d, mp, {}, wl).value;
    // Bootstrap over both samples for the standard error.
    std::vector<double> boot(sz(c.bootstrap));
    parallel_for(c.bootstrap, c.workers, [&](int b) {
      RngStream rng(c.seed, {tag(c, "bootstrap"), static_cast<std::uint64_t>(b), j, Purpose::bootstrap});
      std::vector<double> pa(pts.size());
      std::vector<double> pb(limit_pts.size());
      std::vector<double> wb(wl.size());
      for (int i = 0; i < c.reps; ++i) {
        const auto pick = rng() % static_cast<std::uint64_t>(c.reps);
        std::copy_n(pts.begin() + static_cast<std::ptrdiff_t>(pick * sz(2 * d)), 2 * d,
                    pa.begin() + static_cast<std::ptrdiff_t>(sz(i) * sz(2 * d)));
      }
      for (int i = 0; i < c.ref_reps; ++i) {
        const auto pick = rng() % static_cast<std::uint64_t>(c.ref_reps);
        std::copy_n(limit_pts.begin() + static_cast<std::ptrdiff_t>(pick * sz(2 * d)), 2 * d,
                    pb.begin() + static_cast<std::ptrdiff_t>(sz(i) * sz(2 * d)));
        wb[sz(i)] = wl[pick];
      }
      boot[sz(b)] = metrics::w1_sliced(pa, pb, 2 * d, mp, {}, wb).value;
    });
    double se = 0.0;
    if (c.bootstrap > 1) {
      const auto m = metrics::mean_se(boot);
      se = m.se * std::sqrt(static_cast<double>(c.bootstrap));
    }
    w1.x.push_back(Ns[j]);
    w1.y.push_back(value);
    w1.yerr.push_back(se);
    r.rows.push_back({r.experiment, Ns[j], 1, -1, value, se});
  }
  r.series.push_back(w1);
  double worst = -kInf;
  for (std::size_t j = 0; j + 1 < Ns.size(); ++j) {
    const double band = 2.0 * std::hypot(w1.yerr[j], w1.yerr[j + 1]);
    worst = std::max(worst, w1.y[j + 1] - w1.y[j] - band);
  }
  r.add_range("A10.monotone", "largest increase of sliced W1 beyond 2 combined SE", worst, -kInf, 0.0);

  // Sampling-without-replacement bound on random (N, k) pairs.
  const int pairs = 10000;
  int violations = 0;
  double worst_ratio = 0.0;
  RngStream rng(c.seed, {tag(c, "sampling"), 0, 0, Purpose::generic});
  for (int i = 0; i < pairs; ++i) {
    const auto N = static_cast<long long>(std::floor(std::exp(rng.uniform() * std::log(1e6))));
    const long long k = 1 + static_cast<long long>(rng() % static_cast<std::uint64_t>(N));
    const auto tv = metrics::sampling_tv_bound(N, k);
    if (tv.exact > tv.bound * (1.0 + 1e-12)) ++violations;
    if (tv.bound > 0.0) worst_ratio = std::max(worst_ratio, tv.exact / tv.bound);
  }
  r.series.push_back({"sampling_tv_worst_ratio", {static_cast<double>(pairs)}, {worst_ratio}, {0.0}});
  r.add_range("A10.sampling", "pairs with exact > k(k-1)/(2N)", violations, 0.0, 0.0);
}

// =============================================================================
// A11: density solver order
// =============================================================================

void fp_order(const ExperimentConfig& c, Report& r) {
  const SimConfig s = c.sim();
  if (s.dim() != 1) throw ConfigError("config: fp_order is one-dimensional");
  const int levels = c.steps_list.empty() ? 4 : static_cast<int>(c.steps_list.size());
  const fp::SpatialGrid1D base =
      fp::SpatialGrid1D::covering(s.init, s.drift.bound(), s.grid.horizon(), s.sigma, c.dy);
  std::vector<fp::DensityField> finals;
  double mass_err = 0.0;
  double mean_err = 0.0;
  for (int j = 0; j < levels; ++j) {
    const int steps = c.steps_list.empty() ? c.steps << j : c.steps_list[sz(j)];
    const double dy = c.dy / std::pow(2.0, j);
    const fp::SpatialGrid1D g(base.half_width(), dy);
    fp::DensityField rho = fp::deposit_initial(s.init, g);
    const double dt = s.grid.horizon() / steps;
    for (int m = 0; m < steps; ++m) fp::fp_step_inplace(rho, 0.0, s.sigma, s.drift, dt);
    mass_err = std::max(mass_err, std::abs(rho.mass() - 1.0));
    mean_err = std::max(mean_err, std::abs(rho.mean()));
    finals.push_back(std::move(rho));
  }
  Series diff{"l1_refinement_difference", {}, {}, {}};
  for (int j = 0; j + 1 < levels; ++j) {
    const double e = fp::l1_distance(finals[sz(j)], fp::coarsen(finals[sz(j + 1)]));
    diff.x.push_back(finals[sz(j)].grid.dy());
    diff.y.push_back(e);
    diff.yerr.push_back(0.0);
    r.rows.push_back({r.experiment, finals[sz(j)].grid.cells(), 0, j, e, 0.0});
  }
  r.series.push_back(diff);
  for (std::size_t j = 0; j + 1 < diff.y.size(); ++j) {
    r.add_range("A11.ratio" + std::to_string(j + 1), "Richardson ratio of successive refinement differences",
                diff.y[j] / diff.y[j + 1], 1.6, 4.4);
  }
  r.add_range("A11.mass", "largest |mass - 1| over levels", mass_err, 0.0, 1e-8);
  r.add_range("A11.mean", "largest |first moment| over levels", mean_err, 0.0, 1e-6);
}

using Runner = std::function<void(const ExperimentConfig&, Report&)>;

const std::vector<std::pair<ExperimentInfo, Runner>>& table() {
  static const std::vector<std::pair<ExperimentInfo, Runner>> t = {
      {{"lemvitl2_rate", "A1", "flow-map gap of the well-prepared system against the limit flow map"}, lemvitl2_rate},
      {{"prepared_gap_rate", "A2", "coupled bounded-Lipschitz gap between well-prepared system and limit"},
       prepared_gap_rate},
      {{"girsanov_martingale", "A3", "raw Girsanov weights average to one"}, girsanov_martingale},
      {{"reflection_coupling", "A4", "merge-time tail and mean of the reflection coupling"}, reflection_coupling},
      {{"hoeffding", "A5", "Hoeffding moment bounds for Rademacher and conditional-copy drifts"}, hoeffding},
      {{"delta_rate", "A6", "rate of the Delta^N moment with individual noise"}, delta_rate},
      {{"case_b_crossval", "A7", "particle system against the density co-evolution"}, case_b_crossval},
      {{"scheme_identities", "A8", "algebraic identities of the particle schemes"}, scheme_identities},
      {{"counterexample", "A9", "chattering of the conditional-variance counterexample"}, counterexample},
      {{"natural_chaos", "A10", "natural system against the weighted limit; sampling bound"}, natural_chaos},
      {{"fp_order", "A11", "refinement order of the density solver"}, fp_order},
  };
  return t;
}

}  // namespace

const std::vector<ExperimentInfo>& registry() {
  static const std::vector<ExperimentInfo> infos = [] {
    std::vector<ExperimentInfo> v;
    for (const auto& [info, run] : table()) v.push_back(info);
    return v;
  }();
  return infos;
}

const ExperimentInfo& find_experiment(const std::string& name) {
  for (const auto& info : registry()) {
    if (info.name == name) return info;
  }
  std::string known;
  for (const auto& info : registry()) known += (known.empty() ? "" : ", ") + info.name;
  throw ConfigError("unknown experiment '" + name + "'; known experiments: " + known);
}

Report run_experiment(const ExperimentConfig& config) {
  const ExperimentInfo& info = find_experiment(config.name);
  validate(config);
  Report r;
  r.experiment = info.name;
  r.criterion = info.criterion;
  r.seed = config.seed;
  r.config = config.echo();
  r.workers = config.workers <= 0 ? default_workers() : config.workers;
  const auto start = std::chrono::steady_clock::now();
  for (const auto& [entry, run] : table()) {
    if (entry.name == info.name) run(config, r);
  }
  r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return r;
}

}  // namespace condmkv::cli
