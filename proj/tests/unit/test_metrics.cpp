#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "condmkv/errors.hpp"
#include "condmkv/metrics.hpp"

using namespace condmkv;
using namespace condmkv::metrics;

namespace {

// Optimal assignment cost by enumeration of permutations.
double brute_force_w1(std::vector<double> a, const std::vector<double>& b) {
  std::vector<int> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) cost += std::abs(a[i] - b[static_cast<std::size_t>(perm[i])]);
    best = std::min(best, cost / static_cast<double>(a.size()));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

std::vector<double> replicate(const std::vector<double>& v, int times) {
  std::vector<double> out;
  for (double x : v) out.insert(out.end(), static_cast<std::size_t>(times), x);
  return out;
}

std::vector<double> normals(int n, unsigned seed, double shift = 0.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> d(shift, 1.0);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = d(gen);
  return v;
}

}  // namespace

TEST(W1, SmallExamples) {
  const std::vector<double> a{0.0, 1.0};
  const std::vector<double> b{1.0, 2.0};
  EXPECT_DOUBLE_EQ(w1_1d(a, b), 1.0);
  const std::vector<double> c{3.0};
  const std::vector<double> d{0.0, 1.0, 2.0};
  EXPECT_NEAR(w1_1d(c, d), 2.0, 1e-15);
  EXPECT_EQ(w1_1d(a, a), 0.0);
}

TEST(W1, MatchesAssignmentOracle) {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> a(7);
    std::vector<double> b(7);
    for (auto& x : a) x = u(gen);
    for (auto& x : b) x = u(gen);
    EXPECT_NEAR(w1_1d(a, b), brute_force_w1(a, b), 1e-12);
  }
}

TEST(W1, UnequalCountsMatchReplicatedSamples) {
  std::mt19937_64 gen(6);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> a(4);
    std::vector<double> b(6);
    for (auto& x : a) x = u(gen);
    for (auto& x : b) x = u(gen);
    // Least common multiple 12: three copies of each a, two of each b.
    const auto ar = replicate(a, 3);
    const auto br = replicate(b, 2);
    EXPECT_NEAR(w1_1d(a, b), w1_1d(ar, br), 1e-12);
  }
}

TEST(W1, MetricProperties) {
  const auto a = normals(50, 1);
  const auto b = normals(70, 2, 0.5);
  const auto c = normals(30, 3, -0.2);
  EXPECT_NEAR(w1_1d(a, b), w1_1d(b, a), 1e-13);
  EXPECT_LE(w1_1d(a, c), w1_1d(a, b) + w1_1d(b, c) + 1e-13);
  EXPECT_GE(w1_1d(a, b), 0.0);
  std::vector<double> shifted = a;
  for (auto& x : shifted) x += 0.75;
  EXPECT_NEAR(w1_1d(a, shifted), 0.75, 1e-13);
}

TEST(W1, WeightedAgreesWithRepetition) {
  const std::vector<double> a{0.0, 1.0, 5.0};
  const std::vector<double> wa{1.0, 2.0, 1.0};
  const std::vector<double> b{2.0, 3.0};
  const std::vector<double> wb{3.0, 3.0};
  const std::vector<double> ar{0.0, 1.0, 1.0, 5.0};
  EXPECT_NEAR(w1_1d_weighted(a, wa, b, wb), w1_1d(ar, b), 1e-13);
  const std::vector<double> ones{1.0, 1.0, 1.0};
  const std::vector<double> onesb{1.0, 1.0};
  EXPECT_NEAR(w1_1d_weighted(a, ones, b, onesb), w1_1d(a, b), 1e-13);
}

TEST(Sliced, OneDimensionIsPlainW1) {
  const auto a = normals(40, 4);
  const auto b = normals(40, 5, 0.3);
  MetricParams p;
  p.slices = 8;
  const auto r = w1_sliced(a, b, 1, p);
  EXPECT_NEAR(r.value, w1_1d(a, b), 1e-12);
  EXPECT_NEAR(r.se, 0.0, 1e-12);
}

TEST(Sliced, DirectionsAreUnitVectors) {
  const auto dirs = slice_directions(3, 20, 9);
  ASSERT_EQ(dirs.size(), 60u);
  for (int s = 0; s < 20; ++s) {
    double n2 = 0.0;
    for (int j = 0; j < 3; ++j) n2 += dirs[static_cast<std::size_t>(3 * s + j)] * dirs[static_cast<std::size_t>(3 * s + j)];
    EXPECT_NEAR(n2, 1.0, 1e-12);
  }
  EXPECT_EQ(dirs, slice_directions(3, 20, 9));
}

TEST(Sliced, TranslationAveragesProjectedShift) {
  // A shift u of a planar cloud projects to |<v, u>|, whose average over the
  // circle is 2 |u| / pi.
  const auto base = normals(200, 7);
  std::vector<double> a;
  std::vector<double> b;
  for (std::size_t i = 0; i + 1 < base.size(); i += 2) {
    a.push_back(base[i]);
    a.push_back(base[i + 1]);
    b.push_back(base[i] + 1.0);
    b.push_back(base[i + 1]);
  }
  MetricParams p;
  p.slices = 4000;
  p.direction_seed = 3;
  const auto r = w1_sliced(a, b, 2, p);
  EXPECT_NEAR(r.value, 2.0 / M_PI, 4.0 * r.se);
  EXPECT_GT(r.se, 0.0);
}

TEST(BoundedLipschitz, CoupledUpperBound) {
  const TimeGrid g(1.0, 2);
  PathBundle a(g, 1, 1);
  PathBundle b(g, 1, 1);
  b(0, 1) = 0.3;
  b(0, 2) = -0.1;
  std::vector<PathBundle> as{a, a};
  std::vector<PathBundle> bs{b, a};
  const auto r = bl_upper_coupled(as, bs, 1.0);
  EXPECT_NEAR(r.value, 0.15, 1e-15);
  const std::vector<double> sums{0.5, 3.0};
  EXPECT_NEAR(bl_upper_from_distances(sums, 1.0).value, 0.75, 1e-15);
  // Raw importance weights: sum_r w_r min(M, s_r) / reps.
  const std::vector<double> w{3.0, 1.0};
  EXPECT_NEAR(bl_upper_from_distances(sums, 1.0, w).value, 1.25, 1e-15);
  EXPECT_EQ(sup_distance(a, 0, b, 0), 0.3);
}

TEST(Hoeffding, PlusMinusOneSums) {
  // Values +1, -1 per replication: mean 0, so the estimate is exactly 0.
  const int reps = 10;
  const int N = 2;
  std::vector<double> v;
  for (int r = 0; r < reps; ++r) {
    v.push_back(1.0);
    v.push_back(-1.0);
  }
  const auto res = hoeffding_check(v, {}, reps, N, 1, 1.0, 1);
  EXPECT_EQ(res.estimate, 0.0);
  EXPECT_NEAR(res.bound, 2.0, 1e-15);
  EXPECT_TRUE(res.pass);
  const auto q2 = hoeffding_check(v, {}, reps, N, 1, 1.0, 2);
  EXPECT_NEAR(q2.bound, 2.0 * 4.0, 1e-14);
}

TEST(Hoeffding, CentersAreSubtracted) {
  const std::vector<double> v{0.5, 0.5, 1.0, 1.0};
  const std::vector<double> centers{0.25, 0.75};
  const auto res = hoeffding_check(v, centers, 2, 2, 1, 1.0, 1);
  EXPECT_NEAR(res.estimate, 0.0625, 1e-15);
  EXPECT_NEAR(res.bound, 2.0, 1e-15);
  EXPECT_TRUE(res.pass);
  const std::vector<double> ones{1.0, 1.0, 1.0, 1.0};
  const std::vector<double> far{-1.0, -1.0};
  const auto off = hoeffding_check(ones, far, 2, 2, 1, 1.0, 1);
  EXPECT_NEAR(off.estimate, 4.0, 1e-15);
  EXPECT_FALSE(off.pass);
  const std::vector<double> big{3.0, 3.0, 3.0, 3.0};
  EXPECT_THROW(hoeffding_check(big, {}, 2, 2, 1, 1.0, 1), PreconditionError);
}

TEST(SamplingTv, ClosedForms) {
  EXPECT_EQ(sampling_tv_bound(10, 1).exact, 0.0);
  EXPECT_EQ(sampling_tv_bound(10, 1).bound, 0.0);
  EXPECT_NEAR(sampling_tv_bound(2, 2).exact, 0.5, 1e-15);
  EXPECT_NEAR(sampling_tv_bound(2, 2).bound, 0.5, 1e-15);
  EXPECT_NEAR(sampling_tv_bound(10, 3).exact, 0.28, 1e-14);
  EXPECT_NEAR(sampling_tv_bound(10, 3).bound, 0.3, 1e-15);
}

TEST(SamplingTv, ExactNeverExceedsBound) {
  for (long long N : {5LL, 64LL, 1000LL, 100000LL}) {
    for (long long k = 1; k <= std::min(N, 2000LL); k += 7) {
      const auto s = sampling_tv_bound(N, k);
      EXPECT_LE(s.exact, s.bound * (1.0 + 1e-12) + 1e-300) << N << " " << k;
      EXPECT_GE(s.exact, 0.0);
      EXPECT_LE(s.exact, 1.0);
    }
  }
}

TEST(SamplingTv, BranchesAgreeAtSwitch) {
  // Product form below the switch and log-gamma form above agree.
  const auto lo = sampling_tv_bound(1000000, 1000);
  const auto hi = sampling_tv_bound(1000000, 1001);
  const double ratio_direct = (1.0 - hi.exact) / (1.0 - lo.exact);
  EXPECT_NEAR(ratio_direct, 1.0 - 1000.0 / 1000000.0, 1e-9);
}

TEST(Rates, ExactPowerLaw) {
  const std::vector<double> n{10, 100, 1000, 10000};
  std::vector<double> e;
  for (double x : n) e.push_back(3.0 * std::pow(x, -0.5));
  const auto fit = fit_rate(n, e, 200, 1);
  EXPECT_NEAR(fit.slope, -0.5, 1e-12);
  EXPECT_NEAR(fit.intercept, std::log(3.0), 1e-12);
  EXPECT_NEAR(fit.ci_lo, -0.5, 1e-9);
  EXPECT_NEAR(fit.ci_hi, -0.5, 1e-9);
}

TEST(Rates, ConstantErrorsHaveZeroSlope) {
  const std::vector<double> n{10, 20, 40};
  const std::vector<double> e{0.2, 0.2, 0.2};
  EXPECT_NEAR(fit_rate(n, e, 50, 2).slope, 0.0, 1e-14);
}

TEST(Rates, ReplicationBootstrapCoversTrueSlope) {
  std::mt19937_64 gen(8);
  const std::vector<double> n{64, 256, 1024, 4096};
  std::vector<std::vector<double>> per_rep;
  for (double x : n) {
    std::exponential_distribution<double> ex(std::sqrt(x));
    std::vector<double> v(400);
    for (auto& y : v) y = ex(gen);
    per_rep.push_back(v);
  }
  const auto fit = fit_rate(n, per_rep, 500, 4);
  EXPECT_LE(fit.ci_lo, -0.5);
  EXPECT_GE(fit.ci_hi, -0.5);
  EXPECT_NEAR(fit.slope, -0.5, 0.05);
}

TEST(Rates, LeastSquaresLine) {
  const std::vector<double> x{0, 1, 2, 3};
  const std::vector<double> y{1, 3, 5, 7};
  const auto [slope, intercept] = least_squares(x, y);
  EXPECT_NEAR(slope, 2.0, 1e-14);
  EXPECT_NEAR(intercept, 1.0, 1e-14);
}

TEST(Rates, MeanAndStandardError) {
  const std::vector<double> v{1, 2, 3, 4};
  const auto r = mean_se(v);
  EXPECT_NEAR(r.value, 2.5, 1e-15);
  EXPECT_NEAR(r.se, std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
}
