#pragma once

// Deterministic flow maps along a fixed common-noise path x(.):
//
//   Y(t, x) = x - c + int_0^t [ b(Y(s,x) + x_s, x_s) - sum_a w_a b(Y(s,x_a) + x_s, x_s) ] ds
//
// for a weighted atomic law sum_a w_a delta_{x_a}. The centering constant c
// selects the variant: the law's own mean (flow map of the limit, and the
// natural particle system when the law is empirical) or a prescribed mean
// (well-prepared particle system).

#include <span>
#include <vector>

#include "condmkv/core.hpp"

namespace condmkv::flow {

enum class FlowVariant { mu0_map, natural_N, prepared_N };

enum class StepRule {
  /// Left-point rule; matches the Euler scheme of the particle systems.
  left_point,
  /// Trapezoidal rule; each step is an implicit equation solved by Picard sweeps.
  trapezoid,
};

struct FlowOptions {
  double tol = 1e-10;
  int max_sweeps = 200;
  StepRule rule = StepRule::left_point;
  /// Solve only up to this node (-1: the whole grid).
  int last_node = -1;
};

/// Solution of the flow equation. Atoms sharing the same initial point
/// follow the same trajectory, so trajectories are stored once per
/// distinct point and input atoms are mapped onto them.
class YField {
 public:
  const TimeGrid& grid() const noexcept { return grid_; }
  FlowVariant variant() const noexcept { return variant_; }
  StepRule rule() const noexcept { return rule_; }
  int dim() const noexcept { return dim_; }
  int atoms() const noexcept { return static_cast<int>(atom_to_distinct_.size()); }
  int distinct() const noexcept { return static_cast<int>(distinct_weights_.size()); }
  int last_node() const noexcept { return last_node_; }
  double residual() const noexcept { return residual_; }

  /// Weight of an input atom (1/N for particle variants).
  double atom_weight(int atom) const;
  double distinct_weight(int u) const { return distinct_weights_.at(static_cast<std::size_t>(u)); }
  int distinct_of(int atom) const { return atom_to_distinct_.at(static_cast<std::size_t>(atom)); }

  std::span<const double> initial_point(int atom) const;
  std::span<const double> distinct_point(int u) const;
  std::span<const double> offset() const noexcept { return offset_; }

  /// Y(t_m, x_atom).
  std::span<const double> value(int atom, int node) const;
  std::span<const double> distinct_value(int u, int node) const;

  /// sum_a w_a b(Y(t_m, x_a) + x_m, x_m), the subtracted mean drift.
  std::span<const double> mean_drift(int node) const;
  std::span<const double> path_value(int node) const;

  /// Distinct index holding exactly the point x, or -1.
  int find_distinct(std::span<const double> x) const;

  /// Weighted atom average of Y at a node.
  std::vector<double> atom_average(int node) const;

 private:
  friend YField solve_weighted(FlowVariant, int, std::vector<double>, std::vector<double>,
                               std::span<const double>, const PathBundle&, const DriftSpec&,
                               const FlowOptions&);

  std::size_t vindex(int u, int node) const noexcept {
    return (static_cast<std::size_t>(u) * static_cast<std::size_t>(grid_.nodes()) +
            static_cast<std::size_t>(node)) *
           static_cast<std::size_t>(dim_);
  }

  TimeGrid grid_;
  FlowVariant variant_ = FlowVariant::mu0_map;
  StepRule rule_ = StepRule::left_point;
  int dim_ = 1;
  int last_node_ = 0;
  double residual_ = 0.0;
  std::vector<double> path_;
  std::vector<double> offset_;
  std::vector<double> distinct_points_;
  std::vector<double> distinct_weights_;
  std::vector<int> atom_to_distinct_;
  std::vector<double> atom_weights_;
  std::vector<double> values_;
  std::vector<double> mean_drift_;
};

/// Shared solver behind all variants. `points` (atom, component) with
/// `weights`; duplicate points are merged.
YField solve_weighted(FlowVariant variant, int dim, std::vector<double> points,
                      std::vector<double> weights, std::span<const double> offset,
                      const PathBundle& bx, const DriftSpec& drift, const FlowOptions& opts);

/// Flow map of an atomic initial law, centered by its mean.
YField solve_y_field(const InitialLaw& init, const PathBundle& bx, const DriftSpec& drift,
                     const FlowOptions& opts = {});
YField solve_y_field(const Atoms& atoms, const PathBundle& bx, const DriftSpec& drift,
                     const FlowOptions& opts = {});

/// Natural particle flow: the empirical law of x0 centered by its own mean.
YField solve_y_natural(std::span<const double> x0, const PathBundle& bx, const DriftSpec& drift,
                       const FlowOptions& opts = {});

/// Well-prepared particle flow: uniform weights, centered by mu_bar.
YField solve_y_prepared(std::span<const double> x0, std::span<const double> mu_bar,
                        const PathBundle& bx, const DriftSpec& drift,
                        const FlowOptions& opts = {});

/// sum_a w_a b(Y(t_m, x_a) + z, z) written into out (size dim).
void averaged_drift(const YField& field, int node, const double* z, double* out,
                    const DriftSpec& drift);

/// Averaged drift of the limit flow map (variant mu0_map).
std::vector<double> eval_bbar(const YField& field, int node, std::span<const double> z,
                              const DriftSpec& drift);
/// Averaged drift of the well-prepared flow (variant prepared_N).
std::vector<double> eval_bn(const YField& field, int node, std::span<const double> z,
                            const DriftSpec& drift);

/// Trajectory Y(., x) for an arbitrary starting point x, driven by the
/// recorded mean drift of the field; stored (node, component).
std::vector<double> flow_at(const YField& field, std::span<const double> x,
                            const DriftSpec& drift);

/// Largest deviation of the atom average from its required value:
/// 0 for mu0_map / natural_N, (1/N) sum x_i - mu_bar for prepared_N.
double centering_error(const YField& field);

}  // namespace condmkv::flow
