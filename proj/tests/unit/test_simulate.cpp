#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "condmkv/metrics.hpp"
#include "condmkv/simulate.hpp"

using namespace condmkv;
using namespace condmkv::sim;

namespace {

SimConfig case_a(DriftSpec drift, int N, int steps = 64) {
  SimConfig c;
  c.drift = std::move(drift);
  c.N = N;
  c.grid = TimeGrid(1.0, steps);
  c.seed = 2024;
  return c;
}

SimConfig case_b(DriftSpec drift, int N, int steps = 64) {
  SimConfig c = case_a(std::move(drift), N, steps);
  c.sigma = 0.7;
  c.sigma0 = 1.3;
  c.init = InitialLaw::two_point({-1.0}, {2.0}, 2.0 / 3.0);
  return c;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

std::vector<double> common_path(const ParticleRun& run) {
  std::vector<double> w{0.0};
  for (double v : run.inputs.common) w.push_back(w.back() + v);
  return w;
}

}  // namespace

TEST(Particles, NaturalZeroDriftIsInitialPlusNoise) {
  SimConfig c = case_a(drifts::zero(), 7);
  c.sigma0 = 0.5;
  const auto run = run_natural(c, 1);
  const auto w = common_path(run);
  for (int i = 0; i < 7; ++i) {
    for (int m = 0; m < c.grid.nodes(); ++m) {
      EXPECT_NEAR(run.particle(i, m), run.inputs.x0[i] + 0.5 * w[m], 1e-13);
    }
  }
}

TEST(Particles, NaturalConstantDriftIntegrates) {
  const auto c = case_a(drifts::constant({0.3}), 9);
  const auto run = run_natural(c, 2);
  const auto w = common_path(run);
  const double mean0 = std::accumulate(run.inputs.x0.begin(), run.inputs.x0.end(), 0.0) / 9;
  for (int m = 0; m < c.grid.nodes(); ++m) {
    EXPECT_NEAR(run.x0_path(0, m) - mean0 - w[m], 0.3 * c.grid.time(m), 1e-13);
  }
}

TEST(Particles, PreparedZeroDriftCommonPath) {
  const auto c = case_a(drifts::zero(), 5);
  const auto run = run_prepared(c, 3);
  const auto w = common_path(run);
  for (int m = 0; m < c.grid.nodes(); ++m) EXPECT_NEAR(run.x0_path(0, m), 0.0 + w[m], 1e-13);
}

TEST(Particles, CaseBZeroDrift) {
  const auto c = case_b(drifts::zero(), 4);
  const auto run = run_case_b(c, 4);
  const auto w0 = common_path(run);
  const int steps = c.grid.steps();
  for (int i = 0; i < 4; ++i) {
    double wi = 0.0;
    for (int m = 0; m < c.grid.nodes(); ++m) {
      if (m > 0) wi += run.inputs.individual[i * steps + m - 1];
      EXPECT_NEAR(run.particle(i, m), run.inputs.x0[i] + c.sigma * wi + c.sigma0 * w0[m], 1e-13);
      EXPECT_NEAR(run.x0_path(0, m), c.init.mean()[0] + c.sigma0 * w0[m], 1e-13);
    }
  }
}

// Each identity is re-derived here from the stored inputs and paths.
TEST(Particles, SchemeIdentitiesRecomputed) {
  const auto ca = case_a(drifts::tanh_gap(), 33, 100);
  const auto cb = case_b(drifts::sign_gap(), 33, 100);
  for (std::uint64_t rep = 0; rep < 5; ++rep) {
    const auto nat = run_natural(ca, rep);
    const auto prep = run_prepared(ca, rep);
    const auto b = run_case_b(cb, rep);
    const double mu_a = ca.init.mean()[0];
    const double mu_b = cb.init.mean()[0];
    const double x0_mean_a = std::accumulate(prep.inputs.x0.begin(), prep.inputs.x0.end(), 0.0) / 33;
    const double x0_mean_b = std::accumulate(b.inputs.x0.begin(), b.inputs.x0.end(), 0.0) / 33;
    std::vector<double> wsum(33, 0.0);
    for (int m = 0; m < ca.grid.nodes(); ++m) {
      double sn = 0, sp = 0, sb = 0, wbar = 0;
      for (int i = 0; i < 33; ++i) {
        sn += nat.particle(i, m);
        sp += prep.particle(i, m);
        sb += b.particle(i, m);
        if (m > 0) wsum[i] += b.inputs.individual[i * 100 + m - 1];
        wbar += wsum[i];
      }
      EXPECT_NEAR(nat.x0_path(0, m), sn / 33, 1e-12);
      EXPECT_NEAR(prep.x0_path(0, m), sp / 33 + mu_a - x0_mean_a, 1e-12);
      EXPECT_NEAR(b.x0_path(0, m), sb / 33 + mu_b - x0_mean_b - cb.sigma * wbar / 33, 1e-12);
    }
    EXPECT_LE(scheme_identity_error(nat), 1e-12);
    EXPECT_LE(scheme_identity_error(prep), 1e-12);
    EXPECT_LE(scheme_identity_error(b), 1e-12);
  }
}

TEST(Particles, ExchangeabilityIsBitwise) {
  for (int system = 0; system < 3; ++system) {
    const SimConfig c = system == 2 ? case_b(drifts::sign_gap(), 12, 40) : case_a(drifts::tanh_gap(), 12, 40);
    SimConfig gauss = c;
    gauss.init = InitialLaw::gaussian({0.2}, {1.5});
    const auto in = draw_particle_inputs(gauss, 77, 0, system == 2);
    std::vector<int> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    std::rotate(perm.begin(), perm.begin() + 5, perm.end());
    ParticleInputs shuffled = in;
    const int steps = c.grid.steps();
    for (int i = 0; i < 12; ++i) {
      shuffled.x0[i] = in.x0[perm[i]];
      if (system == 2) {
        std::copy_n(in.individual.begin() + perm[i] * steps, steps, shuffled.individual.begin() + i * steps);
      }
    }
    auto run = [&](const ParticleInputs& x) {
      if (system == 0) return run_natural(gauss, x);
      if (system == 1) return run_prepared(gauss, x);
      return run_case_b(gauss, x);
    };
    const auto a = run(in);
    const auto b = run(shuffled);
    for (int i = 0; i < 12; ++i) {
      for (int m = 0; m < c.grid.nodes(); ++m) ASSERT_EQ(b.particle(i, m), a.particle(perm[i], m));
    }
    for (int m = 0; m < c.grid.nodes(); ++m) ASSERT_EQ(a.x0_path(0, m), b.x0_path(0, m));
  }
}

TEST(Particles, NestedInitialDraws) {
  auto c = case_b(drifts::sign_gap(), 10);
  const auto small = draw_particle_inputs(c, 5, 3, true);
  c.N = 25;
  const auto large = draw_particle_inputs(c, 5, 3, true);
  EXPECT_TRUE(std::equal(small.x0.begin(), small.x0.end(), large.x0.begin()));
  EXPECT_TRUE(std::equal(small.individual.begin(), small.individual.end(), large.individual.begin()));
  EXPECT_EQ(small.common, large.common);
}

TEST(Particles, WorkerCountDoesNotChangeResults) {
  SimConfig c = case_a(drifts::tanh_gap(), 4);
  RunOptions one{11, 1};
  RunOptions four{11, 4};
  const auto a = prepared_vs_limit_gap(c, 1, 1.0, 40, one);
  const auto b = prepared_vs_limit_gap(c, 1, 1.0, 40, four);
  EXPECT_EQ(a.per_rep, b.per_rep);
  LimitOptions l1;
  l1.workers = 1;
  LimitOptions l3;
  l3.workers = 3;
  EXPECT_EQ(sample_limit_case_a(c, 2, 30, l1).log_weights, sample_limit_case_a(c, 2, 30, l3).log_weights);
}

TEST(Particles, CasePreconditions) {
  auto c = case_a(drifts::sign_gap(), 4);
  EXPECT_THROW(run_natural(c, 0), ConfigError);
  c = case_a(drifts::tanh_gap(), 4);
  c.sigma = 1.0;
  EXPECT_THROW(run_prepared(c, 0), ConfigError);
  auto b = case_b(drifts::sign_gap(), 4);
  b.sigma = 0.0;
  EXPECT_THROW(run_case_b(b, 0), ConfigError);
}

TEST(Limit, ZeroDriftWeightsAreOne) {
  const auto c = case_a(drifts::zero(), 1);
  LimitOptions o;
  o.keep_paths = true;
  const auto ens = sample_limit_case_a(c, 2, 20, o);
  for (double lw : ens.log_weights) EXPECT_EQ(lw, 0.0);
  for (int r = 0; r < 20; ++r) {
    const auto& p = ens.paths[r];
    for (int m = 0; m < c.grid.nodes(); ++m) EXPECT_NEAR(p(3, m), p(0, m), 1e-13);
  }
}

TEST(Limit, ConstantDriftHasExactGirsanovWeight) {
  auto c = case_a(drifts::constant({0.5}), 1, 32);
  c.sigma0 = 0.8;
  LimitOptions o;
  o.keep_paths = true;
  const auto ens = sample_limit_case_a(c, 1, 50, o);
  for (int r = 0; r < 50; ++r) {
    const double BT = (ens.paths[r](0, 32) - c.init.mean()[0]) / c.sigma0;
    const double expected = 0.5 / 0.8 * BT - 0.5 * (0.5 / 0.8) * (0.5 / 0.8) * 1.0;
    EXPECT_NEAR(ens.log_weights[r], expected, 1e-12);
  }
}

TEST(Limit, ConstantDriftShiftsTheWeightedMean) {
  auto c = case_a(drifts::constant({0.5}), 1, 16);
  c.init = InitialLaw::two_point({-1.0}, {2.0}, 0.5);
  const int reps = 20000;
  const auto ens = sample_limit_case_a(c, 1, reps);
  const auto w = ens.weights();
  std::vector<double> zx(reps);
  for (int r = 0; r < reps; ++r) zx[r] = w[r] * ens.terminal_of(r)[0];
  const auto m = metrics::mean_se(zx);
  EXPECT_NEAR(m.value, 0.5 + 0.5, 4.0 * m.se);
}

TEST(Limit, GirsanovWeightMatchesDirectSum) {
  const auto c = case_a(drifts::neg_tanh_sum(), 1, 128);
  RngStream rng(4, {0, 0, 0, Purpose::common_noise});
  const auto dB = brownian_increments(c.grid, 1, rng);
  const auto x0 = cumulative_path(c.grid, 1, dB, c.init.mean(), c.sigma0);
  const auto f = flow::solve_y_field(c.init, x0, c.drift);
  double lz = 0.0;
  for (int m = 0; m < c.grid.steps(); ++m) {
    const std::vector<double> z{x0(0, m)};
    const double bb = flow::eval_bbar(f, m, z, c.drift)[0];
    lz += bb * dB[m] - 0.5 * bb * bb * c.grid.dt();
  }
  EXPECT_NEAR(girsanov_log_weight(f, dB, 1.0), lz, 1e-13);
}

TEST(Limit, RawWeightsAreMartingale) {
  for (const auto& d : {drifts::tanh_gap(), drifts::neg_tanh_sum(), drifts::tanh_of_z()}) {
    auto c = case_a(d, 1, 64);
    c.init = InitialLaw::two_point({-1.0}, {2.0}, 2.0 / 3.0);
    LimitOptions o;
    o.experiment = 5;
    const auto ens = sample_limit_case_a(c, 1, 10000, o);
    EXPECT_NEAR(ens.raw_weight_mean(), 1.0, 4.0 * ens.raw_weight_se()) << d.name();
  }
}

TEST(Limit, WeightOverflowIsReported) {
  auto c = case_a(drifts::constant({40.0}), 1, 16);
  c.sigma0 = 0.05;
  c.grid = TimeGrid(5.0, 16);
  EXPECT_THROW(sample_limit_case_a(c, 1, 4), SolverError);
}

TEST(Gap, ZeroDriftGivesZero) {
  const auto c = case_a(drifts::zero(), 16);
  const auto g = prepared_vs_limit_gap(c, 2, 2.0, 50);
  EXPECT_EQ(g.value, 0.0);
}

TEST(Gap, SingleAtomLawGivesZero) {
  auto c = case_a(drifts::tanh_gap(), 1);
  c.init = InitialLaw::atoms(1, {0.7}, {1.0});
  const auto g = prepared_vs_limit_gap(c, 1, 1.0, 30);
  EXPECT_LE(g.value, 1e-10);
}

TEST(Gap, ComponentsAddUp) {
  const auto c = case_a(drifts::tanh_gap(), 32);
  const auto g = prepared_vs_limit_gap(c, 1, 1.0, 200);
  EXPECT_NEAR(g.value, g.tv_term + g.path_term, 1e-12);
  EXPECT_NEAR(g.value, metrics::mean_se(g.per_rep).value, 1e-12);
  EXPECT_GT(g.value, 0.0);
  EXPECT_THROW(prepared_vs_limit_gap(case_a(drifts::tanh_gap(), 2), 3, 1.0, 10), ConfigError);
}

TEST(Gap, SharedDrawsAcrossN) {
  const auto c = case_a(drifts::tanh_gap(), 64);
  const std::vector<int> Ns{8, 64};
  const auto both = prepared_vs_limit_gap(c, 1, 1.0, 20, Ns);
  auto c8 = c;
  c8.N = 8;
  const auto single = prepared_vs_limit_gap(c8, 1, 1.0, 20);
  EXPECT_EQ(both[0].per_rep, single.per_rep);
}

TEST(Coupling, ZeroGapMergesImmediately) {
  const auto r = reflection_coupling(0.0, TimeGrid(1.0, 64), 100, 1);
  for (double t : r.tau) EXPECT_EQ(t, 0.0);
}

TEST(Coupling, NoMergeProbabilityClosedForm) {
  // The pair merges when B reaches h/2: P[tau = T] = 2 Phi(h / (2 sqrt T)) - 1.
  const TimeGrid g(1.0, 256);
  const int reps = 100000;
  const auto r = reflection_coupling(1.0, g, reps, 21);
  int never = 0;
  for (char m : r.merged) never += m == 0;
  const double p = static_cast<double>(never) / reps;
  const double se = std::sqrt(p * (1 - p) / reps);
  EXPECT_NEAR(p, 2.0 * normal_cdf(0.5) - 1.0, 4.0 * se);
  for (double t : r.tau) {
    EXPECT_GE(t, 0.0);
    EXPECT_LE(t, 1.0);
  }
}

TEST(Coupling, TailBelowBound) {
  const TimeGrid g(1.0, 256);
  const auto r = reflection_coupling(0.5, g, 100000, 22);
  for (int m = 1; m < g.nodes(); ++m) {
    const double t = g.time(m);
    const auto [p, se] = r.tail(t);
    EXPECT_LE(p, std::min(1.0, 2.0 * 0.5 / std::sqrt(2.0 * M_PI * t)) + 4.0 * se) << "t=" << t;
  }
}

TEST(Coupling, TailMatchesHittingLawAtEveryNode) {
  const TimeGrid g(1.0, 32);
  const double h = 0.1;
  const auto r = reflection_coupling(h, g, 100000, 24);
  for (int m = 1; m < g.nodes(); ++m) {
    const double t = g.time(m);
    const auto [p, se] = r.tail(t);
    EXPECT_NEAR(p, 2.0 * normal_cdf(0.5 * h / std::sqrt(t)) - 1.0, 4.0 * se + 1e-3) << "t=" << t;
  }
  EXPECT_EQ(r.tail(0.0).first, 1.0);
}

TEST(Coupling, PairMergesAndStaysTogether) {
  const TimeGrid g(1.0, 128);
  const auto r = reflection_coupling(0.2, g, 10, 23);
  const double tau = r.tau[0];
  for (int m = 0; m < g.nodes(); ++m) {
    if (g.time(m) >= tau && tau < 1.0) EXPECT_EQ(r.pair(0, m), r.pair(1, m));
    if (g.time(m) < tau) EXPECT_EQ(r.pair(1, m), 0.2 - r.pair(0, m));
  }
}

TEST(Coupling, MeanTauGrowsAtMostLinearly) {
  const TimeGrid g(1.0, 256);
  std::vector<double> ratio;
  for (double h : {0.1, 0.2, 0.5, 1.0}) {
    const auto r = reflection_coupling(h, g, 20000, 24);
    ratio.push_back(r.mean_tau().first / h);
  }
  const auto [lo, hi] = std::minmax_element(ratio.begin(), ratio.end());
  EXPECT_LT((*hi - *lo) / *hi, 0.5);
}

TEST(Counterexample, ReducedRecursionAlternates) {
  const double h = 0.125;
  const auto D = reduced_counterexample(h, 20);
  for (std::size_t m = 0; m < D.size(); ++m) EXPECT_EQ(D[m], m % 2 == 0 ? 0.0 : -2.0 * h);
  const auto [lo, hi] = std::minmax_element(D.begin(), D.end());
  EXPECT_EQ(*hi - *lo, 2.0 * h);
}

TEST(Counterexample, PhiAndSmoothedSign) {
  EXPECT_EQ(counterexample_phi(0.75), 1.0);
  EXPECT_EQ(counterexample_phi(-0.5), -1.0);
  EXPECT_EQ(counterexample_phi(0.25), 0.5);
  EXPECT_EQ(smoothed_sign(0.0, 0.0), 1.0);
  EXPECT_EQ(smoothed_sign(-1e-300, 0.0), -1.0);
  EXPECT_EQ(smoothed_sign(0.05, 0.1), 0.5);
  EXPECT_EQ(smoothed_sign(-3.0, 0.1), -1.0);
  EXPECT_EQ(smoothed_sign(0.0, 0.1), 0.0);
}

TEST(Counterexample, AmplitudeHalvesWithDt) {
  RngStream rng(8, {0, 0, 0, Purpose::common_noise});
  const TimeGrid fine(1.0, 4096);
  const auto dW = brownian_increments(fine, 1, rng);
  double previous = 0.0;
  for (int steps : {256, 512, 1024, 2048, 4096}) {
    const TimeGrid g(1.0, steps);
    const auto rec = run_counterexample(0.0, g, coarsen_increments(dW, 1, 4096 / steps));
    ASSERT_EQ(rec.hit, 0);
    ASSERT_FALSE(std::isnan(rec.amplitude));
    EXPECT_NEAR(rec.amplitude, 2.0 * g.dt(), 1e-15);
    if (previous > 0.0) EXPECT_NEAR(previous / rec.amplitude, 2.0, 0.4);
    previous = rec.amplitude;
    EXPECT_EQ(rec.D[0], 0.0);
    for (int m = 0; m < g.nodes(); ++m) {
      EXPECT_NEAR(rec.D[m], rec.paths(0, m) - rec.paths(1, m) - 2.0, 1e-12);
    }
  }
}

TEST(Counterexample, SmoothedSystemIsCauchyInDt) {
  RngStream rng(9, {0, 0, 0, Purpose::common_noise});
  const auto dW = brownian_increments(TimeGrid(1.0, 1024), 1, rng);
  std::vector<double> diffs;
  std::vector<double> prev;
  int prev_steps = 0;
  for (int steps : {64, 128, 256, 512, 1024}) {
    const auto rec = run_counterexample(0.1, TimeGrid(1.0, steps), coarsen_increments(dW, 1, 1024 / steps));
    if (!prev.empty()) {
      double sup = 0.0;
      for (int m = 0; m <= prev_steps; ++m) sup = std::max(sup, std::abs(prev[m] - rec.D[2 * m]));
      diffs.push_back(sup);
    }
    prev = rec.D;
    prev_steps = steps;
  }
  for (std::size_t j = 1; j < diffs.size(); ++j) EXPECT_LE(diffs[j], diffs[j - 1]);
}

TEST(Counterexample, CoarsenIncrements) {
  const std::vector<double> fine{1, 2, 3, 4, 5, 6, 7, 8};
  EXPECT_EQ(coarsen_increments(fine, 1, 2), (std::vector<double>{3, 7, 11, 15}));
  EXPECT_EQ(coarsen_increments(fine, 2, 2), (std::vector<double>{4, 6, 12, 14}));
  EXPECT_THROW(coarsen_increments(fine, 1, 3), PreconditionError);
}
