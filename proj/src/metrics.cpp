#include "condmkv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace condmkv::metrics {
namespace {

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

void require_nonempty(std::span<const double> a, std::span<const double> b, const char* who) {
  if (a.empty() || b.empty()) throw PreconditionError(std::string(who) + ": empty sample");
}

double percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

void finish_ci(RateFit& fit, std::vector<double>& slopes) {
  if (slopes.empty()) {
    fit.ci_lo = fit.ci_hi = fit.slope;
    return;
  }
  fit.ci_lo = std::min(percentile(slopes, 0.025), fit.slope);
  fit.ci_hi = std::max(percentile(slopes, 0.975), fit.slope);
}

void check_fit_inputs(std::span<const double> n, std::size_t count) {
  if (n.size() < 3 || count != n.size()) throw PreconditionError("fit_rate: need >= 3 matching points");
  for (double v : n) {
    if (!(v > 0.0)) throw PreconditionError("fit_rate: N values must be positive");
  }
}

}  // namespace

MeanSe mean_se(std::span<const double> values) {
  MeanSe r;
  if (values.empty()) return r;
  const auto n = static_cast<double>(values.size());
  for (double v : values) r.value += v;
  r.value /= n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - r.value) * (v - r.value);
    r.se = std::sqrt(ss / (n - 1.0) / n);
  }
  return r;
}

// =============================================================================
// Wasserstein distances
// =============================================================================

double w1_1d(std::span<const double> a, std::span<const double> b) {
  require_nonempty(a, b, "w1_1d");
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  if (sa.size() == sb.size()) {
    double total = 0.0;
    for (std::size_t i = 0; i < sa.size(); ++i) total += std::abs(sa[i] - sb[i]);
    return total / static_cast<double>(sa.size());
  }
  // Integrate |Qa(u) - Qb(u)| over the merged breakpoints i/na and j/nb.
  const auto na = static_cast<long long>(sa.size());
  const auto nb = static_cast<long long>(sb.size());
  long long i = 0;
  long long j = 0;
  double total = 0.0;
  // Breakpoints compared exactly as integers: (i+1)/na vs (j+1)/nb.
  long long prev_num = 0;  // previous breakpoint as a fraction over na * nb
  while (i < na && j < nb) {
    const long long ea = (i + 1) * nb;
    const long long eb = (j + 1) * na;
    const long long end = std::min(ea, eb);
    total += std::abs(sa[static_cast<std::size_t>(i)] - sb[static_cast<std::size_t>(j)]) *
             static_cast<double>(end - prev_num);
    prev_num = end;
    if (ea == end) ++i;
    if (eb == end) ++j;
  }
  return total / static_cast<double>(na * nb);
}

double w1_1d_weighted(std::span<const double> a, std::span<const double> wa,
                      std::span<const double> b, std::span<const double> wb) {
  require_nonempty(a, b, "w1_1d_weighted");
  if (wa.size() != a.size() || wb.size() != b.size()) {
    throw PreconditionError("w1_1d_weighted: weight count mismatch");
  }
  const double ta = std::accumulate(wa.begin(), wa.end(), 0.0);
  const double tb = std::accumulate(wb.begin(), wb.end(), 0.0);
  if (!(ta > 0.0) || !(tb > 0.0)) throw PreconditionError("w1_1d_weighted: weights must have positive mass");
  struct Event {
    double x;
    double dw;
  };
  std::vector<Event> ev;
  ev.reserve(a.size() + b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (wa[i] < 0.0) throw PreconditionError("w1_1d_weighted: negative weight");
    ev.push_back({a[i], wa[i] / ta});
  }
  for (std::size_t i = 0; i < b.size(); ++i) {
    if (wb[i] < 0.0) throw PreconditionError("w1_1d_weighted: negative weight");
    ev.push_back({b[i], -wb[i] / tb});
  }
  std::sort(ev.begin(), ev.end(), [](const Event& p, const Event& q) {
    return p.x < q.x || (p.x == q.x && p.dw < q.dw);
  });
  double cdf_gap = 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < ev.size(); ++i) {
    cdf_gap += ev[i].dw;
    total += std::abs(cdf_gap) * (ev[i + 1].x - ev[i].x);
  }
  return total;
}

std::vector<double> slice_directions(int dim, int slices, std::uint64_t seed) {
  if (dim < 1 || slices < 1) throw PreconditionError("slice_directions: need dim, slices >= 1");
  std::vector<double> dirs(sz(dim) * sz(slices));
  for (int s = 0; s < slices; ++s) {
    RngStream rng(seed, {0, static_cast<std::uint64_t>(s), 0, Purpose::direction});
    double norm = 0.0;
    do {
      norm = 0.0;
      for (int c = 0; c < dim; ++c) {
        const double g = rng.normal();
        dirs[sz(s * dim + c)] = g;
        norm += g * g;
      }
    } while (norm == 0.0);
    norm = std::sqrt(norm);
    for (int c = 0; c < dim; ++c) dirs[sz(s * dim + c)] /= norm;
  }
  return dirs;
}

SlicedResult w1_sliced(std::span<const double> a, std::span<const double> b, int dim,
                       const MetricParams& params, std::span<const double> wa,
                       std::span<const double> wb) {
  require_nonempty(a, b, "w1_sliced");
  if (dim < 1 || a.size() % sz(dim) != 0 || b.size() % sz(dim) != 0) {
    throw PreconditionError("w1_sliced: sample size not a multiple of the dimension");
  }
  const bool weighted = !wa.empty() || !wb.empty();
  auto distance = [&](std::span<const double> pa, std::span<const double> pb) {
    if (!weighted) return w1_1d(pa, pb);
    std::vector<double> ua(wa.begin(), wa.end());
    std::vector<double> ub(wb.begin(), wb.end());
    if (ua.empty()) ua.assign(pa.size(), 1.0);
    if (ub.empty()) ub.assign(pb.size(), 1.0);
    return w1_1d_weighted(pa, ua, pb, ub);
  };
  if (dim == 1) return {distance(a, b), 0.0};
  const std::size_t na = a.size() / sz(dim);
  const std::size_t nb = b.size() / sz(dim);
  const auto dirs = slice_directions(dim, params.slices, params.direction_seed);
  std::vector<double> per_slice(sz(params.slices));
  std::vector<double> pa(na);
  std::vector<double> pb(nb);
  for (int s = 0; s < params.slices; ++s) {
    const double* u = dirs.data() + sz(s * dim);
    for (std::size_t i = 0; i < na; ++i) {
      double v = 0.0;
      for (int c = 0; c < dim; ++c) v += u[c] * a[i * sz(dim) + sz(c)];
      pa[i] = v;
    }
    for (std::size_t i = 0; i < nb; ++i) {
      double v = 0.0;
      for (int c = 0; c < dim; ++c) v += u[c] * b[i * sz(dim) + sz(c)];
      pb[i] = v;
    }
    per_slice[sz(s)] = distance(pa, pb);
  }
  const MeanSe m = mean_se(per_slice);
  return {m.value, m.se};
}

std::vector<double> default_landmarks(double horizon) {
  return {0.0, 0.25 * horizon, 0.5 * horizon, 0.75 * horizon, horizon};
}

std::vector<double> embed_paths(const PathBundle& paths, std::span<const double> landmarks) {
  const TimeGrid& g = paths.grid();
  const int d = paths.dim();
  const std::size_t L = landmarks.size();
  std::vector<double> out(sz(paths.paths()) * L * sz(d));
  for (std::size_t l = 0; l < L; ++l) {
    const double t = landmarks[l];
    if (t < 0.0 || t > g.horizon() * (1.0 + 1e-12)) throw PreconditionError("embed_paths: landmark outside [0, T]");
    const double pos = std::min(t / g.dt(), static_cast<double>(g.steps()));
    const int m = std::min(static_cast<int>(std::floor(pos)), g.steps() - 1);
    const double frac = pos - m;
    for (int p = 0; p < paths.paths(); ++p) {
      for (int c = 0; c < d; ++c) {
        out[(sz(p) * L + l) * sz(d) + sz(c)] = (1.0 - frac) * paths(p, m, c) + frac * paths(p, m + 1, c);
      }
    }
  }
  return out;
}

// =============================================================================
// Bounded-Lipschitz coupling bound
// =============================================================================

double sup_distance(const PathBundle& a, int pa, const PathBundle& b, int pb) {
  if (!(a.grid() == b.grid()) || a.dim() != b.dim()) throw PreconditionError("sup_distance: shapes differ");
  double sup = 0.0;
  for (int m = 0; m < a.grid().nodes(); ++m) {
    double d2 = 0.0;
    for (int c = 0; c < a.dim(); ++c) {
      const double diff = a(pa, m, c) - b(pb, m, c);
      d2 += diff * diff;
    }
    sup = std::max(sup, std::sqrt(d2));
  }
  return sup;
}

MeanSe bl_upper_from_distances(std::span<const double> sup_sums, double M,
                               std::span<const double> weights) {
  if (!(M > 0.0)) throw PreconditionError("bl_upper: M must be positive");
  if (!weights.empty() && weights.size() != sup_sums.size()) {
    throw PreconditionError("bl_upper: weight count mismatch");
  }
  std::vector<double> terms(sup_sums.size());
  for (std::size_t r = 0; r < sup_sums.size(); ++r) {
    terms[r] = std::min(M, sup_sums[r]) * (weights.empty() ? 1.0 : weights[r]);
  }
  return mean_se(terms);
}

MeanSe bl_upper_coupled(std::span<const PathBundle> a, std::span<const PathBundle> b, double M,
                        std::span<const double> weights) {
  if (a.size() != b.size()) throw PreconditionError("bl_upper: replication counts differ");
  std::vector<double> sums(a.size());
  for (std::size_t r = 0; r < a.size(); ++r) {
    if (a[r].paths() != b[r].paths()) throw PreconditionError("bl_upper: mismatched tuple arity");
    double s = 0.0;
    for (int p = 0; p < a[r].paths(); ++p) s += sup_distance(a[r], p, b[r], p);
    sums[r] = s;
  }
  return bl_upper_from_distances(sums, M, weights);
}

// =============================================================================
// Moment bounds
// =============================================================================

HoeffdingResult hoeffding_check(std::span<const double> values, std::span<const double> centers,
                                int reps, int N, int dim, double bound, int q) {
  if (q != 1 && q != 2) throw PreconditionError("hoeffding_check: q must be 1 or 2");
  if (reps < 1 || N < 1 || dim < 1) throw PreconditionError("hoeffding_check: bad shape");
  if (values.size() != sz(reps) * sz(N) * sz(dim)) throw PreconditionError("hoeffding_check: value count");
  if (!centers.empty() && centers.size() != sz(reps) * sz(dim)) {
    throw PreconditionError("hoeffding_check: center count");
  }
  std::vector<double> moments(sz(reps));
  for (int r = 0; r < reps; ++r) {
    double norm2 = 0.0;
    for (int c = 0; c < dim; ++c) {
      double mean = 0.0;
      for (int i = 0; i < N; ++i) {
        const double v = values[(sz(r) * sz(N) + sz(i)) * sz(dim) + sz(c)];
        if (std::abs(v) > bound * (1.0 + 1e-12)) throw PreconditionError("hoeffding_check: value exceeds bound");
        mean += v;
      }
      mean /= N;
      const double center = centers.empty() ? 0.0 : centers[sz(r) * sz(dim) + sz(c)];
      norm2 += (mean - center) * (mean - center);
    }
    moments[sz(r)] = q == 1 ? norm2 : norm2 * norm2;
  }
  const MeanSe m = mean_se(moments);
  HoeffdingResult res;
  res.estimate = m.value;
  res.se = m.se;
  const double base = 4.0 * dim * bound * bound / N;
  res.bound = q == 1 ? base : 2.0 * base * base;
  const double allowed = res.bound * (1.0 + (res.estimate > 0.0 ? 4.0 * res.se / res.estimate : 0.0));
  res.pass = res.estimate <= allowed;
  res.margin = res.bound > 0.0 ? (allowed - res.estimate) / res.bound : 0.0;
  return res;
}

SamplingTv sampling_tv_bound(long long N, long long k) {
  if (N < 1 || k < 1) throw PreconditionError("sampling_tv_bound: need N, k >= 1");
  if (k > N) throw PreconditionError("sampling_tv_bound: k must not exceed N");
  SamplingTv r;
  r.bound = static_cast<double>(k) * static_cast<double>(k - 1) / (2.0 * static_cast<double>(N));
  const auto Nd = static_cast<double>(N);
  double log_ratio = 0.0;
  if (k <= 1000) {
    // log prod_{j<k} (1 - j/N)
    for (long long j = 1; j < k; ++j) log_ratio += std::log1p(-static_cast<double>(j) / Nd);
  } else {
    log_ratio = std::lgamma(Nd + 1.0) - std::lgamma(Nd - static_cast<double>(k) + 1.0) -
                static_cast<double>(k) * std::log(Nd);
  }
  r.exact = -std::expm1(log_ratio);
  return r;
}

// =============================================================================
// Rate fits
// =============================================================================

std::pair<double, double> least_squares(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw PreconditionError("least_squares: need >= 2 points");
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 0.0)) throw PreconditionError("least_squares: x values are all equal");
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

RateFit fit_rate(std::span<const double> n, std::span<const double> errors, int bootstrap_reps,
                 std::uint64_t seed) {
  check_fit_inputs(n, errors.size());
  RateFit fit;
  for (std::size_t i = 0; i < n.size(); ++i) {
    if (!(errors[i] > 0.0)) throw PreconditionError("fit_rate: errors must be positive");
    fit.log_n.push_back(std::log(n[i]));
    fit.log_err.push_back(std::log(errors[i]));
  }
  std::tie(fit.slope, fit.intercept) = least_squares(fit.log_n, fit.log_err);
  std::vector<double> slopes;
  std::vector<double> bx(n.size());
  std::vector<double> by(n.size());
  for (int b = 0; b < bootstrap_reps; ++b) {
    RngStream rng(seed, {0, static_cast<std::uint64_t>(b), 0, Purpose::bootstrap});
    for (std::size_t i = 0; i < n.size(); ++i) {
      const auto pick = static_cast<std::size_t>(rng() % n.size());
      bx[i] = fit.log_n[pick];
      by[i] = fit.log_err[pick];
    }
    if (std::all_of(bx.begin(), bx.end(), [&](double v) { return v == bx[0]; })) continue;
    slopes.push_back(least_squares(bx, by).first);
  }
  finish_ci(fit, slopes);
  return fit;
}

RateFit fit_rate(std::span<const double> n, const std::vector<std::vector<double>>& per_rep,
                 int bootstrap_reps, std::uint64_t seed) {
  check_fit_inputs(n, per_rep.size());
  std::vector<double> means(n.size());
  for (std::size_t j = 0; j < n.size(); ++j) {
    if (per_rep[j].empty()) throw PreconditionError("fit_rate: empty replication list");
    means[j] = mean_se(per_rep[j]).value;
  }
  RateFit fit = fit_rate(n, means, 0, seed);
  std::vector<double> slopes;
  std::vector<double> by(n.size());
  for (int b = 0; b < bootstrap_reps; ++b) {
    bool ok = true;
    for (std::size_t j = 0; j < n.size(); ++j) {
      RngStream rng(seed, {j, static_cast<std::uint64_t>(b), 1, Purpose::bootstrap});
      const auto& v = per_rep[j];
      double s = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) s += v[static_cast<std::size_t>(rng() % v.size())];
      s /= static_cast<double>(v.size());
      if (!(s > 0.0)) {
        ok = false;
        break;
      }
      by[j] = std::log(s);
    }
    if (ok) slopes.push_back(least_squares(fit.log_n, by).first);
  }
  finish_ci(fit, slopes);
  return fit;
}

}  // namespace condmkv::metrics
