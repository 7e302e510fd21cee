#include "condmkv/flow.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace condmkv::flow {
namespace {

bool lex_less(const double* a, const double* b, int dim) {
  return std::lexicographical_compare(a, a + dim, b, b + dim);
}

void check_inputs(const PathBundle& bx, const DriftSpec& drift, int dim, const FlowOptions& opts) {
  if (!drift.is_lipschitz()) {
    throw PreconditionError("flow map needs a drift Lipschitz in its first variable");
  }
  if (bx.paths() != 1) throw PreconditionError("flow map is driven by exactly one path");
  if (bx.dim() != dim || drift.dim() != dim) {
    throw PreconditionError("flow map: path, drift and atoms must share the dimension");
  }
  if (!(opts.tol > 0.0)) throw PreconditionError("flow map: tolerance must be positive");
  if (opts.max_sweeps < 1) throw PreconditionError("flow map: need at least one sweep");
  if (opts.last_node > bx.grid().steps()) {
    throw PreconditionError("flow map: last node beyond the grid");
  }
}

}  // namespace

// =============================================================================
// YField accessors
// =============================================================================

double YField::atom_weight(int atom) const { return atom_weights_.at(static_cast<std::size_t>(atom)); }

std::span<const double> YField::initial_point(int atom) const {
  return distinct_point(distinct_of(atom));
}

std::span<const double> YField::distinct_point(int u) const {
  return {distinct_points_.data() + static_cast<std::size_t>(u) * static_cast<std::size_t>(dim_),
          static_cast<std::size_t>(dim_)};
}

std::span<const double> YField::value(int atom, int node) const {
  return distinct_value(distinct_of(atom), node);
}

std::span<const double> YField::distinct_value(int u, int node) const {
  if (node < 0 || node > last_node_) {
    throw PreconditionError("flow field: node beyond the solved range");
  }
  return {values_.data() + vindex(u, node), static_cast<std::size_t>(dim_)};
}

std::span<const double> YField::mean_drift(int node) const {
  if (node < 0 || node > last_node_) {
    throw PreconditionError("flow field: node beyond the solved range");
  }
  return {mean_drift_.data() + static_cast<std::size_t>(node) * static_cast<std::size_t>(dim_),
          static_cast<std::size_t>(dim_)};
}

std::span<const double> YField::path_value(int node) const {
  return {path_.data() + static_cast<std::size_t>(node) * static_cast<std::size_t>(dim_),
          static_cast<std::size_t>(dim_)};
}

int YField::find_distinct(std::span<const double> x) const {
  int lo = 0;
  int hi = distinct();
  while (lo < hi) {
    const int mid = (lo + hi) / 2;
    if (lex_less(distinct_point(mid).data(), x.data(), dim_)) {
      lo = mid + 1;
    } else {
      hi = mid;
    }
  }
  if (lo < distinct() && std::equal(x.begin(), x.end(), distinct_point(lo).begin())) return lo;
  return -1;
}

std::vector<double> YField::atom_average(int node) const {
  std::vector<double> avg(static_cast<std::size_t>(dim_), 0.0);
  for (int u = 0; u < distinct(); ++u) {
    const auto y = distinct_value(u, node);
    for (int c = 0; c < dim_; ++c) avg[static_cast<std::size_t>(c)] += distinct_weights_[static_cast<std::size_t>(u)] * y[static_cast<std::size_t>(c)];
  }
  return avg;
}

// =============================================================================
// Solver
// =============================================================================

YField solve_weighted(FlowVariant variant, int dim, std::vector<double> points,
                      std::vector<double> weights, std::span<const double> offset,
                      const PathBundle& bx, const DriftSpec& drift, const FlowOptions& opts) {
  check_inputs(bx, drift, dim, opts);
  const int n_atoms = static_cast<int>(weights.size());
  if (n_atoms < 1) throw PreconditionError("flow map: need at least one atom");
  if (points.size() != static_cast<std::size_t>(n_atoms) * static_cast<std::size_t>(dim) ||
      offset.size() != static_cast<std::size_t>(dim)) {
    throw PreconditionError("flow map: atom or offset sizes do not match the dimension");
  }

  YField f;
  f.grid_ = bx.grid();
  f.variant_ = variant;
  f.rule_ = opts.rule;
  f.dim_ = dim;
  f.last_node_ = opts.last_node < 0 ? bx.grid().steps() : opts.last_node;
  f.path_.assign(bx.values().begin(), bx.values().end());
  f.offset_.assign(offset.begin(), offset.end());
  f.atom_weights_ = weights;

  // Merge duplicate points, keeping them in lexicographic order.
  std::vector<int> order(static_cast<std::size_t>(n_atoms));
  std::iota(order.begin(), order.end(), 0);
  const double* pts = points.data();
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return lex_less(pts + a * dim, pts + b * dim, dim);
  });
  f.atom_to_distinct_.assign(static_cast<std::size_t>(n_atoms), -1);
  for (int idx = 0; idx < n_atoms; ++idx) {
    const int a = order[static_cast<std::size_t>(idx)];
    const double* p = pts + a * dim;
    const bool fresh = idx == 0 || !std::equal(p, p + dim, pts + order[static_cast<std::size_t>(idx - 1)] * dim);
    if (fresh) {
      f.distinct_points_.insert(f.distinct_points_.end(), p, p + dim);
      f.distinct_weights_.push_back(0.0);
    }
    f.distinct_weights_.back() += weights[static_cast<std::size_t>(a)];
    f.atom_to_distinct_[static_cast<std::size_t>(a)] = static_cast<int>(f.distinct_weights_.size()) - 1;
  }

  const int U = f.distinct();
  const int nodes = f.grid_.nodes();
  const int last = f.last_node_;
  const double dt = f.grid_.dt();
  f.values_.assign(static_cast<std::size_t>(U) * static_cast<std::size_t>(nodes) * static_cast<std::size_t>(dim), 0.0);
  f.mean_drift_.assign(static_cast<std::size_t>(nodes) * static_cast<std::size_t>(dim), 0.0);

  for (int u = 0; u < U; ++u) {
    for (int c = 0; c < dim; ++c) {
      f.values_[f.vindex(u, 0) + static_cast<std::size_t>(c)] =
          f.distinct_points_[static_cast<std::size_t>(u * dim + c)] - offset[static_cast<std::size_t>(c)];
    }
  }

  // drift_at(node, state, out_per_atom, out_mean): b(y_u + x_m, x_m) and its weighted mean.
  std::vector<double> arg(static_cast<std::size_t>(dim));
  auto drift_at = [&](int node, const double* state, double* per_atom, double* mean) {
    const double* xm = f.path_.data() + static_cast<std::size_t>(node * dim);
    std::fill(mean, mean + dim, 0.0);
    for (int u = 0; u < U; ++u) {
      for (int c = 0; c < dim; ++c) arg[static_cast<std::size_t>(c)] = state[u * dim + c] + xm[c];
      drift(arg.data(), xm, per_atom + u * dim);
      const double w = f.distinct_weights_[static_cast<std::size_t>(u)];
      for (int c = 0; c < dim; ++c) mean[c] += w * per_atom[u * dim + c];
    }
  };

  std::vector<double> cur(static_cast<std::size_t>(U * dim));
  std::vector<double> nxt(static_cast<std::size_t>(U * dim));
  std::vector<double> f_left(static_cast<std::size_t>(U * dim));
  std::vector<double> f_right(static_cast<std::size_t>(U * dim));
  std::vector<double> mean_right(static_cast<std::size_t>(dim));
  std::vector<double> guess(static_cast<std::size_t>(U * dim));

  auto load = [&](int node, std::vector<double>& dst) {
    for (int u = 0; u < U; ++u) {
      std::copy_n(f.values_.begin() + static_cast<std::ptrdiff_t>(f.vindex(u, node)), dim,
                  dst.begin() + u * dim);
    }
  };
  auto store = [&](int node, const std::vector<double>& src) {
    for (int u = 0; u < U; ++u) {
      std::copy_n(src.begin() + u * dim, dim,
                  f.values_.begin() + static_cast<std::ptrdiff_t>(f.vindex(u, node)));
    }
  };

  // Forward march. For the left-point rule the time-ordered Picard sweep is
  // exact after one pass; the trapezoid rule iterates each step to tolerance.
  load(0, cur);
  for (int m = 0; m < last; ++m) {
    double* mean_left = f.mean_drift_.data() + static_cast<std::size_t>(m * dim);
    drift_at(m, cur.data(), f_left.data(), mean_left);
    for (std::size_t i = 0; i < cur.size(); ++i) {
      nxt[i] = cur[i] + dt * (f_left[i] - mean_left[i % static_cast<std::size_t>(dim)]);
    }
    if (opts.rule == StepRule::trapezoid) {
      double change = 0.0;
      int sweep = 0;
      do {
        guess = nxt;
        drift_at(m + 1, guess.data(), f_right.data(), mean_right.data());
        change = 0.0;
        for (std::size_t i = 0; i < cur.size(); ++i) {
          const auto c = i % static_cast<std::size_t>(dim);
          nxt[i] = cur[i] + 0.5 * dt * ((f_left[i] - mean_left[c]) + (f_right[i] - mean_right[c]));
          change = std::max(change, std::abs(nxt[i] - guess[i]));
        }
        ++sweep;
        if (!std::isfinite(change) || (change > opts.tol && sweep >= opts.max_sweeps)) {
          std::ostringstream msg;
          msg << "flow map: Picard sweeps did not converge at step " << m << " after " << sweep
              << " sweeps (last change " << change << ")";
          throw SolverError(msg.str(), change);
        }
      } while (change > opts.tol);
    }
    store(m + 1, nxt);
    std::swap(cur, nxt);
  }
  drift_at(last, cur.data(), f_left.data(),
           f.mean_drift_.data() + static_cast<std::size_t>(last * dim));

  // Residual of the discretized integral equation, accumulated from t = 0.
  std::vector<double> integral(static_cast<std::size_t>(U * dim), 0.0);
  std::vector<double> state(static_cast<std::size_t>(U * dim));
  std::vector<double> mean_tmp(static_cast<std::size_t>(dim));
  std::vector<double> f_next(static_cast<std::size_t>(U * dim));
  double residual = 0.0;
  load(0, state);
  drift_at(0, state.data(), f_left.data(), mean_tmp.data());
  std::vector<double> mean_prev = mean_tmp;
  for (int m = 0; m < last; ++m) {
    load(m + 1, state);
    drift_at(m + 1, state.data(), f_next.data(), mean_tmp.data());
    for (int u = 0; u < U; ++u) {
      for (int c = 0; c < dim; ++c) {
        const auto i = static_cast<std::size_t>(u * dim + c);
        const double left = f_left[i] - mean_prev[static_cast<std::size_t>(c)];
        const double right = f_next[i] - mean_tmp[static_cast<std::size_t>(c)];
        integral[i] += opts.rule == StepRule::left_point ? dt * left : 0.5 * dt * (left + right);
        const double expected = f.distinct_points_[i] - offset[static_cast<std::size_t>(c)] + integral[i];
        residual = std::max(residual, std::abs(state[i] - expected));
      }
    }
    std::swap(f_left, f_next);
    mean_prev = mean_tmp;
  }
  f.residual_ = residual;
  const double scale = 1.0 + std::abs(*std::max_element(f.values_.begin(), f.values_.end(),
                                                         [](double a, double b) { return std::abs(a) < std::abs(b); }));
  if (!(residual <= opts.tol * scale * std::max(1, last))) {
    std::ostringstream msg;
    msg << "flow map: fixed-point residual " << residual << " exceeds tolerance";
    throw SolverError(msg.str(), residual);
  }
  return f;
}

YField solve_y_field(const Atoms& atoms, const PathBundle& bx, const DriftSpec& drift,
                     const FlowOptions& opts) {
  if (atoms.size() < 1) throw ConfigError("flow map: empty atom list");
  std::vector<double> mean(static_cast<std::size_t>(atoms.dim), 0.0);
  for (int a = 0; a < atoms.size(); ++a) {
    for (int c = 0; c < atoms.dim; ++c) {
      mean[static_cast<std::size_t>(c)] += atoms.weights[static_cast<std::size_t>(a)] * atoms.point(a)[static_cast<std::size_t>(c)];
    }
  }
  return solve_weighted(FlowVariant::mu0_map, atoms.dim, atoms.points, atoms.weights, mean, bx,
                        drift, opts);
}

YField solve_y_field(const InitialLaw& init, const PathBundle& bx, const DriftSpec& drift,
                     const FlowOptions& opts) {
  if (!init.is_atomic()) {
    throw PreconditionError("flow map needs an atomic initial law; quadratize it first");
  }
  const Atoms atoms = init.to_atoms();
  const auto mean = init.mean();
  return solve_weighted(FlowVariant::mu0_map, atoms.dim, atoms.points, atoms.weights,
                        mean, bx, drift, opts);
}

YField solve_y_natural(std::span<const double> x0, const PathBundle& bx, const DriftSpec& drift,
                       const FlowOptions& opts) {
  const int dim = bx.dim();
  const auto n = static_cast<int>(x0.size() / static_cast<std::size_t>(dim));
  if (n < 1 || x0.size() != static_cast<std::size_t>(n * dim)) {
    throw PreconditionError("natural flow: need N >= 1 points of the path dimension");
  }
  std::vector<double> weights(static_cast<std::size_t>(n), 1.0 / n);
  std::vector<double> mean(static_cast<std::size_t>(dim), 0.0);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < dim; ++c) mean[static_cast<std::size_t>(c)] += weights[static_cast<std::size_t>(i)] * x0[static_cast<std::size_t>(i * dim + c)];
  }
  return solve_weighted(FlowVariant::natural_N, dim, {x0.begin(), x0.end()}, std::move(weights),
                        mean, bx, drift, opts);
}

YField solve_y_prepared(std::span<const double> x0, std::span<const double> mu_bar,
                        const PathBundle& bx, const DriftSpec& drift, const FlowOptions& opts) {
  const int dim = bx.dim();
  const auto n = static_cast<int>(x0.size() / static_cast<std::size_t>(dim));
  if (n < 1 || x0.size() != static_cast<std::size_t>(n * dim)) {
    throw PreconditionError("prepared flow: need N >= 1 points of the path dimension");
  }
  std::vector<double> weights(static_cast<std::size_t>(n), 1.0 / n);
  return solve_weighted(FlowVariant::prepared_N, dim, {x0.begin(), x0.end()}, std::move(weights),
                        mu_bar, bx, drift, opts);
}

// =============================================================================
// Averaged drifts
// =============================================================================

void averaged_drift(const YField& field, int node, const double* z, double* out,
                    const DriftSpec& drift) {
  const int dim = field.dim();
  std::fill(out, out + dim, 0.0);
  double arg[8];
  double val[8];
  std::vector<double> arg_heap;
  std::vector<double> val_heap;
  double* a = arg;
  double* v = val;
  if (dim > 8) {
    arg_heap.resize(static_cast<std::size_t>(dim));
    val_heap.resize(static_cast<std::size_t>(dim));
    a = arg_heap.data();
    v = val_heap.data();
  }
  for (int u = 0; u < field.distinct(); ++u) {
    const auto y = field.distinct_value(u, node);
    for (int c = 0; c < dim; ++c) a[c] = y[static_cast<std::size_t>(c)] + z[c];
    drift(a, z, v);
    const double w = field.distinct_weight(u);
    for (int c = 0; c < dim; ++c) out[c] += w * v[c];
  }
}

std::vector<double> eval_bbar(const YField& field, int node, std::span<const double> z,
                              const DriftSpec& drift) {
  if (field.variant() != FlowVariant::mu0_map) {
    throw PreconditionError("eval_bbar needs the flow map of the initial law");
  }
  if (z.size() != static_cast<std::size_t>(field.dim())) throw PreconditionError("eval_bbar: z dimension");
  std::vector<double> out(static_cast<std::size_t>(field.dim()));
  averaged_drift(field, node, z.data(), out.data(), drift);
  return out;
}

std::vector<double> eval_bn(const YField& field, int node, std::span<const double> z,
                            const DriftSpec& drift) {
  if (field.variant() != FlowVariant::prepared_N) {
    throw PreconditionError("eval_bn needs the well-prepared particle flow");
  }
  if (z.size() != static_cast<std::size_t>(field.dim())) throw PreconditionError("eval_bn: z dimension");
  std::vector<double> out(static_cast<std::size_t>(field.dim()));
  averaged_drift(field, node, z.data(), out.data(), drift);
  return out;
}

std::vector<double> flow_at(const YField& field, std::span<const double> x, const DriftSpec& drift) {
  const int dim = field.dim();
  if (x.size() != static_cast<std::size_t>(dim)) throw PreconditionError("flow_at: x dimension");
  const int last = field.last_node();
  const double dt = field.grid().dt();
  std::vector<double> out(static_cast<std::size_t>(field.grid().nodes() * dim), 0.0);
  for (int c = 0; c < dim; ++c) out[static_cast<std::size_t>(c)] = x[static_cast<std::size_t>(c)] - field.offset()[static_cast<std::size_t>(c)];
  std::vector<double> arg(static_cast<std::size_t>(dim));
  std::vector<double> left(static_cast<std::size_t>(dim));
  std::vector<double> right(static_cast<std::size_t>(dim));
  std::vector<double> guess(static_cast<std::size_t>(dim));
  auto eval = [&](int node, const double* y, double* res) {
    const auto xm = field.path_value(node);
    for (int c = 0; c < dim; ++c) arg[static_cast<std::size_t>(c)] = y[c] + xm[static_cast<std::size_t>(c)];
    drift(arg.data(), xm.data(), res);
    const auto mean = field.mean_drift(node);
    for (int c = 0; c < dim; ++c) res[c] -= mean[static_cast<std::size_t>(c)];
  };
  for (int m = 0; m < last; ++m) {
    const double* y = out.data() + m * dim;
    double* next = out.data() + (m + 1) * dim;
    eval(m, y, left.data());
    for (int c = 0; c < dim; ++c) next[c] = y[c] + dt * left[static_cast<std::size_t>(c)];
    if (field.rule() == StepRule::trapezoid) {
      for (int sweep = 0; sweep < 200; ++sweep) {
        std::copy_n(next, dim, guess.begin());
        eval(m + 1, guess.data(), right.data());
        double change = 0.0;
        for (int c = 0; c < dim; ++c) {
          const auto i = static_cast<std::size_t>(c);
          next[c] = y[c] + 0.5 * dt * (left[i] + right[i]);
          change = std::max(change, std::abs(next[c] - guess[i]));
        }
        if (change <= 1e-14) break;
      }
    }
  }
  return out;
}

double centering_error(const YField& field) {
  const int dim = field.dim();
  std::vector<double> required(static_cast<std::size_t>(dim), 0.0);
  for (int u = 0; u < field.distinct(); ++u) {
    const auto p = field.distinct_point(u);
    for (int c = 0; c < dim; ++c) required[static_cast<std::size_t>(c)] += field.distinct_weight(u) * p[static_cast<std::size_t>(c)];
  }
  for (int c = 0; c < dim; ++c) required[static_cast<std::size_t>(c)] -= field.offset()[static_cast<std::size_t>(c)];
  double err = 0.0;
  for (int m = 0; m <= field.last_node(); ++m) {
    const auto avg = field.atom_average(m);
    for (int c = 0; c < dim; ++c) err = std::max(err, std::abs(avg[static_cast<std::size_t>(c)] - required[static_cast<std::size_t>(c)]));
  }
  return err;
}

}  // namespace condmkv::flow
