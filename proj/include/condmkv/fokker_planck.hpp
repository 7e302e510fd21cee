#pragma once

// One-dimensional conditional Fokker-Planck machinery for the case with
// individual noise: the law of Y = X - X0 given the common noise evolves by
//
//   d/dt rho = (sigma^2 / 2) rho_yy - d/dy ( rho (b(y + x0_t, x0_t) - <b>_rho) )
//
// and is co-evolved with X0. Finite-volume discretization, explicit in time.

#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include "condmkv/core.hpp"
#include "condmkv/simulate.hpp"

namespace condmkv::fp {

class SpatialGrid1D {
 public:
  SpatialGrid1D() = default;
  /// Cells of width dy covering [-L, L]; L is rounded up to a whole number of cells.
  SpatialGrid1D(double half_width, double dy);

  /// Grid covering the centered support of the law, the drift displacement
  /// bound * T and 6 sigma sqrt(T) of diffusion.
  static SpatialGrid1D covering(const InitialLaw& init, double bound, double horizon,
                                double sigma, double dy);

  double half_width() const noexcept { return L_; }
  int cells() const noexcept { return n_; }
  double dy() const noexcept { return dy_; }
  double center(int i) const noexcept { return -L_ + (i + 0.5) * dy_; }

  bool operator==(const SpatialGrid1D& o) const noexcept { return L_ == o.L_ && n_ == o.n_; }

 private:
  double L_ = 1.0;
  int n_ = 1;
  double dy_ = 2.0;
};

struct DensityField {
  SpatialGrid1D grid;
  std::vector<double> values;
  double time = 0.0;

  double mass() const;
  double mean() const;
  double variance() const;
};

/// Atoms of the centered law, each spread as a Gaussian of standard
/// deviation 2 dy and renormalized so every atom keeps its exact mass and
/// position on the grid.
DensityField deposit_initial(const InitialLaw& init, const SpatialGrid1D& grid);

/// Largest dt with sigma^2 dt / dy^2 + 2 bound dt / dy <= 1.
double max_stable_dt(const SpatialGrid1D& grid, double sigma, double bound);

/// Midpoint quadrature of b(y + x0, x0) against the density.
double fp_mean_drift(const DensityField& density, double x0, const DriftSpec& drift);

/// One explicit step; mass is conserved by the flux form and the first
/// moment by the centering of the velocity.
void fp_step_inplace(DensityField& density, double x0, double sigma, const DriftSpec& drift,
                     double dt);
DensityField fp_step(const DensityField& density, double x0, double sigma,
                     const DriftSpec& drift, double dt);

struct CoevolveOptions : sim::RunOptions {
  double dy = 0.05;
  /// Nodes at which density snapshots are kept (empty: none).
  std::vector<int> snapshot_nodes;
  /// Drift used for the co-evolution if it differs from config.drift
  /// (e.g. a mollified version); null means config.drift.
  const DriftSpec* drift_override = nullptr;
};

/// One co-evolved replication: X0 path, the averaged drift at every node
/// and the requested density snapshots.
struct LimitPathB {
  std::vector<double> x0;
  std::vector<double> bbar;
  std::vector<DensityField> snapshots;
  /// Increments of W0 driving this replication.
  std::vector<double> dW0;
};

struct LimitRecordB {
  TimeGrid grid;
  SpatialGrid1D space;
  std::vector<LimitPathB> paths;

  /// Mean and standard error of X0 at the horizon over replications.
  std::pair<double, double> terminal_mean() const;
};

/// Replication r uses common-noise stream (experiment, r, 0, common_noise);
/// dW0 may instead be given explicitly.
LimitPathB coevolve_one(const SimConfig& config, const SpatialGrid1D& space,
                        std::span<const double> dW0, const CoevolveOptions& opts);
LimitRecordB coevolve_limit_b(const SimConfig& config, int reps, const CoevolveOptions& opts = {});

/// k conditionally independent copies along one co-evolved path:
/// Y^i Euler steps of dY = (b(Y + X0, X0) - bbar) dt + sigma dW^i with
/// Y_0 ~ centered initial law; returned as X^i = Y^i + X0, (copy, node).
PathBundle sample_conditional_copies(const SimConfig& config, const LimitPathB& limit, int k,
                                     std::uint64_t experiment, std::uint64_t replication);

struct DeltaStats {
  int N = 0;
  /// Per-replication int_0^T |Delta^N_s|^2 ds (left sums over nodes).
  std::vector<double> integral;
  double mean = 0.0;
  double se = 0.0;
  double second_moment = 0.0;
  double second_moment_se = 0.0;
};

struct DeltaOptions : CoevolveOptions {
  /// Node at which drift evaluations are kept for moment checks (-1: none).
  int probe_node = -1;
};

struct DeltaResult {
  std::vector<DeltaStats> stats;
  /// Per N: (rep, particle) drift values at the probe node and per rep the
  /// conditional mean they should be centered by.
  std::vector<std::vector<double>> probe_values;
  std::vector<double> probe_centers;
};

/// Per replication one co-evolved path gives bbar; max(N_list) copies are
/// simulated and the first N of them define Delta^N.
DeltaResult delta_moment_estimate(const SimConfig& config, std::span<const int> N_list, int reps,
                                  const DeltaOptions& opts = {});

/// b convolved in both arguments with a biweight kernel of radius 1/n,
/// evaluated on the fixed lattice of spacing 1/(8n) at half-integer
/// positions. Exactly constant for constant b and odd-symmetric at 0.
DriftSpec mollify_drift(const DriftSpec& drift, int n);

/// W1 between two densities on the same grid (L1 distance of their CDFs).
double w1_density(const DensityField& a, const DensityField& b);

/// L1 distance between densities on the same grid.
double l1_distance(const DensityField& a, const DensityField& b);

/// Restriction to a grid with twice the cell width by pair averaging.
DensityField coarsen(const DensityField& fine);

/// CSV with header "t,y,density".
void write_density_csv(std::ostream& os, std::span<const DensityField> snapshots);

}  // namespace condmkv::fp
