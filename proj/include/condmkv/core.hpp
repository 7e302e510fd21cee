#pragma once

// Shared value types: time grids, paths, drift coefficients, initial laws
// and simulation configurations. All of them are immutable once built and
// may be shared read-only between workers.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "condmkv/errors.hpp"
#include "condmkv/rng.hpp"

namespace condmkv {

// =============================================================================
// Time grid
// =============================================================================

class TimeGrid {
 public:
  TimeGrid() : TimeGrid(1.0, 1) {}
  TimeGrid(double horizon, int steps);

  double horizon() const noexcept { return horizon_; }
  int steps() const noexcept { return steps_; }
  int nodes() const noexcept { return steps_ + 1; }
  double dt() const noexcept { return dt_; }

  /// t_m = m dt, with t_M equal to the horizon exactly.
  double time(int m) const;
  std::vector<double> times() const;

  bool operator==(const TimeGrid& o) const noexcept {
    return horizon_ == o.horizon_ && steps_ == o.steps_;
  }

 private:
  double horizon_;
  int steps_;
  double dt_;
};

TimeGrid make_grid(double horizon, int steps);

// =============================================================================
// Paths
// =============================================================================

/// A set of d-dimensional paths sampled at every node of a grid.
/// Storage is row-major in (path, node, component).
class PathBundle {
 public:
  PathBundle() = default;
  PathBundle(TimeGrid grid, int dim, int paths);

  const TimeGrid& grid() const noexcept { return grid_; }
  int dim() const noexcept { return dim_; }
  int paths() const noexcept { return paths_; }

  std::span<double> at(int path, int node);
  std::span<const double> at(int path, int node) const;
  double& operator()(int path, int node, int comp = 0) {
    return values_[index(path, node) + static_cast<std::size_t>(comp)];
  }
  double operator()(int path, int node, int comp = 0) const {
    return values_[index(path, node) + static_cast<std::size_t>(comp)];
  }

  /// Whole path p as a contiguous (node, component) block.
  std::span<const double> path(int p) const;

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  bool all_finite() const noexcept;

 private:
  std::size_t index(int path, int node) const noexcept {
    return (static_cast<std::size_t>(path) * static_cast<std::size_t>(grid_.nodes()) +
            static_cast<std::size_t>(node)) *
           static_cast<std::size_t>(dim_);
  }

  TimeGrid grid_;
  int dim_ = 1;
  int paths_ = 0;
  std::vector<double> values_;
};

/// Increments dW_m ~ N(0, dt I), stored (step, component).
std::vector<double> brownian_increments(const TimeGrid& grid, int dim, RngStream& rng);

/// Single path start + scale * cumulative sum of increments, value `start` at t = 0.
PathBundle cumulative_path(const TimeGrid& grid, int dim, std::span<const double> increments,
                           std::span<const double> start, double scale = 1.0);

// =============================================================================
// Drift coefficient b(x, x0)
// =============================================================================

enum class Smoothness { lipschitz_x, measurable };

class DriftSpec {
 public:
  using Fn = std::function<void(const double* x, const double* z, double* out)>;

  DriftSpec() = default;
  DriftSpec(std::string name, int dim, Fn fn, double bound, std::optional<double> lip_x,
            Smoothness tag);

  /// Evaluates b(x, z) and asserts |b| <= bound; violations throw.
  void operator()(const double* x, const double* z, double* out) const;
  double operator()(double x, double z) const;

  const std::string& name() const noexcept { return name_; }
  int dim() const noexcept { return dim_; }
  double bound() const noexcept { return bound_; }
  std::optional<double> lip_x() const noexcept { return lip_x_; }
  Smoothness smoothness() const noexcept { return tag_; }
  bool is_lipschitz() const noexcept { return tag_ == Smoothness::lipschitz_x; }

 private:
  std::string name_;
  int dim_ = 1;
  Fn fn_;
  double bound_ = 0.0;
  std::optional<double> lip_x_;
  Smoothness tag_ = Smoothness::measurable;
};

namespace drifts {

DriftSpec zero(int dim = 1);
DriftSpec constant(std::vector<double> c);
/// b(x, z) = tanh(z - x) componentwise.
DriftSpec tanh_gap(int dim = 1);
/// b(x, z) = -tanh(x + z) componentwise.
DriftSpec neg_tanh_sum(int dim = 1);
/// b(x, z) = sign(z - x) componentwise, sign(0) = +1.
DriftSpec sign_gap(int dim = 1);
/// b(x, z) = tanh(z), no dependence on x.
DriftSpec tanh_of_z(int dim = 1);

/// sign with sign(0) = +1.
inline double sign(double v) noexcept { return v >= 0.0 ? 1.0 : -1.0; }

}  // namespace drifts

/// Named drifts used by configuration files: "zero", "constant:<c>",
/// "tanh_gap", "neg_tanh_sum", "sign_gap", "tanh_of_z".
DriftSpec make_drift(const std::string& spec, int dim = 1);

// =============================================================================
// Initial law
// =============================================================================

/// Weighted atoms in R^d; points stored (atom, component).
struct Atoms {
  int dim = 1;
  std::vector<double> points;
  std::vector<double> weights;

  int size() const noexcept { return static_cast<int>(weights.size()); }
  std::span<const double> point(int a) const {
    return {points.data() + static_cast<std::size_t>(a) * static_cast<std::size_t>(dim),
            static_cast<std::size_t>(dim)};
  }
};

class InitialLaw {
 public:
  enum class Kind { atoms, gaussian, two_point };

  static InitialLaw atoms(int dim, std::vector<double> points, std::vector<double> weights);
  /// P(X = a) = p, P(X = b) = 1 - p.
  static InitialLaw two_point(std::vector<double> a, std::vector<double> b, double p);
  /// Covariance given row-major d x d.
  static InitialLaw gaussian(std::vector<double> mean, std::vector<double> covariance);

  Kind kind() const noexcept { return kind_; }
  int dim() const noexcept { return dim_; }
  std::span<const double> mean() const noexcept { return mean_; }
  bool is_atomic() const noexcept { return kind_ != Kind::gaussian; }

  /// Exact atoms for atomic laws; tensor Gauss-Hermite quadrature with
  /// `nodes_per_dim` nodes for Gaussian laws.
  Atoms to_atoms(int nodes_per_dim = 16) const;

  /// Largest |x - mean| over the support (atomic laws) or 8 standard
  /// deviations (Gaussian).
  double centered_support_radius() const;

  /// n i.i.d. draws, stored (draw, component).
  std::vector<double> sample(int n, RngStream& rng) const;
  void sample_one(RngStream& rng, std::span<double> out) const;

  const std::vector<double>& covariance() const noexcept { return cov_; }

 private:
  InitialLaw() = default;

  Kind kind_ = Kind::atoms;
  int dim_ = 1;
  Atoms atoms_;
  std::vector<double> cumulative_;
  std::vector<double> mean_;
  std::vector<double> cov_;
  std::vector<double> chol_;
};

/// "two_point:a,b,p" | "atoms:x1,x2,...;w1,w2,..." | "gaussian:m,s2" (1-D specs).
InitialLaw make_initial_law(const std::string& spec);

std::vector<double> sample_initial(const InitialLaw& law, int n, RngStream& rng);

// =============================================================================
// Simulation configuration
// =============================================================================

struct SimConfig {
  double sigma = 0.0;
  double sigma0 = 1.0;
  int N = 1;
  int k = 1;
  TimeGrid grid;
  DriftSpec drift = drifts::zero();
  InitialLaw init = InitialLaw::two_point({-1.0}, {1.0}, 0.5);
  std::uint64_t seed = 0;

  int dim() const noexcept { return init.dim(); }

  /// Shared checks: sigma0 > 0, 1 <= k <= N, matching dimensions.
  void validate() const;
  /// sigma = 0 and a drift Lipschitz in x.
  void validate_case_a() const;
  /// sigma > 0, any bounded drift.
  void validate_case_b() const;
};

}  // namespace condmkv
