#pragma once

// Empirical distances and statistical verdicts.

#include <cstdint>
#include <span>
#include <vector>

#include "condmkv/core.hpp"

namespace condmkv::metrics {

struct MetricParams {
  /// Cap of the bounded-Lipschitz distance.
  double M = 1.0;
  int slices = 64;
  std::uint64_t direction_seed = 0;
  /// Landmark times for path embeddings; empty means {0, T/4, T/2, 3T/4, T}.
  std::vector<double> landmarks;
};

/// Exact W1 between the empirical laws of two samples. Equal sizes reduce to
/// the mean absolute difference of order statistics; otherwise the two
/// quantile step functions are integrated exactly.
double w1_1d(std::span<const double> a, std::span<const double> b);

/// W1 between weighted samples (weights need not be normalized).
double w1_1d_weighted(std::span<const double> a, std::span<const double> wa,
                      std::span<const double> b, std::span<const double> wb);

struct SlicedResult {
  double value = 0.0;
  /// Standard error over slice directions.
  double se = 0.0;
};

/// Mean over random unit directions of W1 between the projections.
/// Points are stored (point, component); weights are optional.
SlicedResult w1_sliced(std::span<const double> a, std::span<const double> b, int dim,
                       const MetricParams& params, std::span<const double> wa = {},
                       std::span<const double> wb = {});

/// Unit directions used by w1_sliced, (slice, component).
std::vector<double> slice_directions(int dim, int slices, std::uint64_t seed);

/// Path values at the landmark times (linear interpolation between nodes),
/// one point of dimension dim * landmarks per path.
std::vector<double> embed_paths(const PathBundle& paths, std::span<const double> landmarks);
std::vector<double> default_landmarks(double horizon);

/// Largest distance over nodes between path pa of a and path pb of b.
double sup_distance(const PathBundle& a, int pa, const PathBundle& b, int pb);

struct MeanSe {
  double value = 0.0;
  double se = 0.0;
};

/// Mean over replications of min(M, sum_i sup_t |a_i - b_i|). Each bundle
/// holds one replication's tuple; a[r] and b[r] must have equal arity.
/// Optional weights turn the mean into a weighted mean (raw weights).
MeanSe bl_upper_coupled(std::span<const PathBundle> a, std::span<const PathBundle> b, double M,
                        std::span<const double> weights = {});
/// Same from precomputed per-replication sums of sup distances.
MeanSe bl_upper_from_distances(std::span<const double> sup_sums, double M,
                               std::span<const double> weights = {});

struct HoeffdingResult {
  double estimate = 0.0;
  double se = 0.0;
  double bound = 0.0;
  /// bound - estimate in units of the allowed slack.
  double margin = 0.0;
  bool pass = false;
};

/// values: (rep, N, dim); centers: (rep, dim) conditional means (empty: 0).
/// Estimates E|mean_N - center|^(2q) against q! (4 dim bound^2 / N)^q and
/// passes iff estimate <= bound (1 + 4 se / estimate).
HoeffdingResult hoeffding_check(std::span<const double> values, std::span<const double> centers,
                                int reps, int N, int dim, double bound, int q);

struct SamplingTv {
  double exact = 0.0;
  double bound = 0.0;
};

/// 1 - N! / (N^k (N - k)!) and k (k - 1) / (2 N).
SamplingTv sampling_tv_bound(long long N, long long k);

struct RateFit {
  std::vector<double> log_n;
  std::vector<double> log_err;
  double slope = 0.0;
  double intercept = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
};

/// Least-squares slope of log(error) against log(N); the CI is a 95%
/// percentile bootstrap over resampled (N, error) pairs.
RateFit fit_rate(std::span<const double> n, std::span<const double> errors, int bootstrap_reps = 1000,
                 std::uint64_t seed = 0);

/// As above with replication-level errors: per_rep[j] holds the values whose
/// mean is the error at n[j]; the bootstrap resamples replications.
RateFit fit_rate(std::span<const double> n, const std::vector<std::vector<double>>& per_rep,
                 int bootstrap_reps = 1000, std::uint64_t seed = 0);

/// Least-squares slope and intercept of y on x.
std::pair<double, double> least_squares(std::span<const double> x, std::span<const double> y);

MeanSe mean_se(std::span<const double> values);

}  // namespace condmkv::metrics
