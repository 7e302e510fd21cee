#pragma once

// Monte Carlo drivers: the particle systems, the Girsanov-weighted limit
// sampler, the coupled gap estimator, reflection coupling and the
// conditional-variance counterexample.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "condmkv/core.hpp"
#include "condmkv/flow.hpp"

namespace condmkv::sim {

struct RunOptions {
  /// Experiment component of every stream id.
  std::uint64_t experiment = 0;
  /// Worker threads for replication loops (0: machine parallelism).
  int workers = 1;
};

// =============================================================================
// Particle systems
// =============================================================================

/// Random inputs of one particle-system replication.
struct ParticleInputs {
  int N = 0;
  int dim = 1;
  /// (particle, component)
  std::vector<double> x0;
  /// Increments of W0, (step, component).
  std::vector<double> common;
  /// Increments of W^i, (particle, step, component); empty without individual noise.
  std::vector<double> individual;
};

/// Particle i draws its initial point and its own noise from streams keyed
/// by i, so the first N particles of a larger system coincide with an
/// N-particle draw.
ParticleInputs draw_particle_inputs(const SimConfig& config, std::uint64_t experiment,
                                    std::uint64_t replication, bool with_individual_noise);

enum class SystemKind { natural, prepared, case_b };

/// Particles with identical inputs share one trajectory; paths are stored
/// once per group and particle i reads group group_of[i].
struct ParticleRun {
  SystemKind kind = SystemKind::natural;
  SimConfig config;
  /// Empirical mean path (natural) or X^{0,N} (prepared, case B).
  PathBundle x0_path;
  PathBundle group_paths;
  std::vector<int> group_of;
  std::vector<int> group_count;
  ParticleInputs inputs;

  int N() const noexcept { return static_cast<int>(group_of.size()); }
  double particle(int i, int node, int comp = 0) const {
    return group_paths(group_of[static_cast<std::size_t>(i)], node, comp);
  }
  /// All N particle paths, (particle, node, component).
  PathBundle particle_paths() const;
};

/// X^i_{m+1} = X^i_m + b(X^i_m, mean_j X^j_m) dt + sigma0 dW0_m.
ParticleRun run_natural(const SimConfig& config, ParticleInputs inputs);
ParticleRun run_natural(const SimConfig& config, std::uint64_t replication = 0,
                        const RunOptions& opts = {});

/// Second drift argument X^{0,N}, itself stepped by the particle mean drift.
ParticleRun run_prepared(const SimConfig& config, ParticleInputs inputs);
ParticleRun run_prepared(const SimConfig& config, std::uint64_t replication = 0,
                         const RunOptions& opts = {});

/// As run_prepared with individual noise sigma dW^i on every particle.
ParticleRun run_case_b(const SimConfig& config, ParticleInputs inputs);
ParticleRun run_case_b(const SimConfig& config, std::uint64_t replication = 0,
                       const RunOptions& opts = {});

/// Largest violation over nodes and components of the algebraic identity
/// linking x0_path to the particle mean for the run's system.
double scheme_identity_error(const ParticleRun& run);

// =============================================================================
// Girsanov-weighted limit sampler
// =============================================================================

enum class Normalization { raw, self_normalized };

/// Weighted replications of the limit: per replication the tuple
/// (X0, X1, ..., Xk) with weight Z.
struct WeightedEnsemble {
  int k = 1;
  int dim = 1;
  TimeGrid grid;
  Normalization mode = Normalization::raw;
  std::vector<double> log_weights;
  /// (replication, 1 + k, component) values at the horizon.
  std::vector<double> terminal;
  /// Per replication: paths X0, X1..Xk, W0 (only when requested).
  std::vector<PathBundle> paths;

  int reps() const noexcept { return static_cast<int>(log_weights.size()); }
  /// exp(log Z) (raw) or weights scaled to sum 1 (self-normalized).
  std::vector<double> weights() const;
  double raw_weight_mean() const;
  double raw_weight_se() const;
  /// Weighted mean of component c of tuple slot j at the horizon.
  double weighted_terminal_mean(int slot, int comp = 0) const;
  std::span<const double> terminal_of(int rep) const;
};

struct LimitOptions : RunOptions {
  bool keep_paths = false;
  Normalization mode = Normalization::raw;
  flow::FlowOptions flow;
};

WeightedEnsemble sample_limit_case_a(const SimConfig& config, int k, int reps,
                                     const LimitOptions& opts = {});

/// log Z = sum_m (c_m / sigma0) . dB_m - 1/2 sum_m |c_m / sigma0|^2 dt with
/// c_m the recorded mean drift of the field; throws beyond |log Z| > 700.
double girsanov_log_weight(const flow::YField& field, std::span<const double> dB, double sigma0);

// =============================================================================
// Coupled gap between the well-prepared system and the limit
// =============================================================================

struct GapEstimate {
  int N = 0;
  double value = 0.0;
  double se = 0.0;
  /// (M/2) mean |Z_N - Z_inf|
  double tv_term = 0.0;
  /// mean Z_inf min(M, sum_i sup_t |Y^{i,N} - Y(x^i)|)
  double path_term = 0.0;
  /// Per-replication contributions; their mean is `value`.
  std::vector<double> per_rep;
  /// Per-replication sup_t |Y^{1,N} - Y(x^1)|.
  std::vector<double> flow_gap;
};

/// One estimate per N in N_list, all sharing the base draws of each
/// replication (initial points are nested prefixes, one Brownian path).
std::vector<GapEstimate> prepared_vs_limit_gap(const SimConfig& config, int k, double M_bl,
                                               int reps, std::span<const int> N_list,
                                               const RunOptions& opts = {});
GapEstimate prepared_vs_limit_gap(const SimConfig& config, int k, double M_bl, int reps,
                                  const RunOptions& opts = {});

// =============================================================================
// Reflection coupling
// =============================================================================

struct CouplingResult {
  double h = 0.0;
  TimeGrid grid;
  /// Capped merge times, one per replication; a merge inside a step is
  /// recorded at the step's right node.
  std::vector<double> tau;
  /// Whether the replication merged before the horizon.
  std::vector<char> merged;
  /// Reduced coordinate of the pair for the first replication, (path, node):
  /// path 0 is B, path 1 is h - B until the merge and B afterwards.
  PathBundle pair;

  /// Empirical P[tau >= t] for the continuous merge time, i.e. the fraction
  /// not merged within [0, t] (t a node), and its standard error.
  std::pair<double, double> tail(double t) const;
  std::pair<double, double> mean_tau() const;
};

/// The pair starts at distance h in the reduced coordinate and merges when
/// the driving Brownian motion reaches h/2. Crossings between nodes are
/// detected with the Brownian-bridge probability and the merge time is
/// rounded up to the next node; tau = T when the pair never merges.
CouplingResult reflection_coupling(double h, const TimeGrid& grid, int reps,
                                   std::uint64_t seed, const RunOptions& opts = {});

// =============================================================================
// Conditional-variance counterexample
// =============================================================================

/// The Lipschitz profile: -1 below -1/2, +1 above 1/2, linear between.
double counterexample_phi(double y) noexcept;
/// sign with sign(0) = +1 when eps = 0; clamp(v / eps, -1, 1) otherwise.
double smoothed_sign(double v, double eps) noexcept;

struct CounterexampleRecord {
  double eps = 0.0;
  TimeGrid grid;
  /// Paths X1 (path 0) and X2 (path 1).
  PathBundle paths;
  /// D_t = X1 - X2 - 2 at every node.
  std::vector<double> D;
  /// First node with D <= 0 (or -1) and first later node leaving the
  /// region X1 >= 1/2, X2 <= -1/2 (or nodes()).
  int hit = -1;
  int exit = 0;
  /// max - min of D over [hit, exit); NaN when the window has < 2 nodes.
  double amplitude = 0.0;
};

/// Euler scheme for the two-atom system with common noise increments dW
/// (one per step). Starts at x1 = 1, x2 = -1.
CounterexampleRecord run_counterexample(double eps, const TimeGrid& grid,
                                        std::span<const double> dW);
CounterexampleRecord run_counterexample(double eps, const TimeGrid& grid, RngStream& rng);

/// Iterates of D_{m+1} = D_m - 2 h sign(D_m) from D_0 = 0.
std::vector<double> reduced_counterexample(double h, int steps);

/// Sums groups of `factor` consecutive increments (coarsening a Brownian path).
std::vector<double> coarsen_increments(std::span<const double> fine, int dim, int factor);

}  // namespace condmkv::sim
