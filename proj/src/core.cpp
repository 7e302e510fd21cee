#include "condmkv/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

namespace condmkv {

// =============================================================================
// TimeGrid
// =============================================================================

TimeGrid::TimeGrid(double horizon, int steps) : horizon_(horizon), steps_(steps) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) {
    throw ConfigError("time grid: horizon must be positive and finite");
  }
  if (steps < 1) {
    throw ConfigError("time grid: number of steps must be at least 1");
  }
  dt_ = horizon / steps;
}

double TimeGrid::time(int m) const {
  if (m < 0 || m > steps_) {
    throw PreconditionError("time grid: node index out of range");
  }
  return m == steps_ ? horizon_ : m * dt_;
}

std::vector<double> TimeGrid::times() const {
  std::vector<double> t(static_cast<std::size_t>(nodes()));
  for (int m = 0; m <= steps_; ++m) t[static_cast<std::size_t>(m)] = time(m);
  return t;
}

TimeGrid make_grid(double horizon, int steps) { return TimeGrid(horizon, steps); }

// =============================================================================
// PathBundle
// =============================================================================

PathBundle::PathBundle(TimeGrid grid, int dim, int paths)
    : grid_(grid), dim_(dim), paths_(paths) {
  if (dim < 1 || paths < 0) {
    throw ConfigError("path bundle: dimension must be >= 1 and path count >= 0");
  }
  values_.assign(static_cast<std::size_t>(paths) * static_cast<std::size_t>(grid.nodes()) *
                     static_cast<std::size_t>(dim),
                 0.0);
}

std::span<double> PathBundle::at(int path, int node) {
  return {values_.data() + index(path, node), static_cast<std::size_t>(dim_)};
}

std::span<const double> PathBundle::at(int path, int node) const {
  return {values_.data() + index(path, node), static_cast<std::size_t>(dim_)};
}

std::span<const double> PathBundle::path(int p) const {
  return {values_.data() + index(p, 0),
          static_cast<std::size_t>(grid_.nodes()) * static_cast<std::size_t>(dim_)};
}

bool PathBundle::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

std::vector<double> brownian_increments(const TimeGrid& grid, int dim, RngStream& rng) {
  if (dim < 1) throw ConfigError("brownian increments: dimension must be >= 1");
  const double sd = std::sqrt(grid.dt());
  std::vector<double> inc(static_cast<std::size_t>(grid.steps()) * static_cast<std::size_t>(dim));
  for (double& v : inc) v = sd * rng.normal();
  return inc;
}

PathBundle cumulative_path(const TimeGrid& grid, int dim, std::span<const double> increments,
                           std::span<const double> start, double scale) {
  if (increments.size() != static_cast<std::size_t>(grid.steps()) * static_cast<std::size_t>(dim) ||
      start.size() != static_cast<std::size_t>(dim)) {
    throw PreconditionError("cumulative_path: increment or start size mismatch");
  }
  PathBundle out(grid, dim, 1);
  for (int c = 0; c < dim; ++c) out(0, 0, c) = start[static_cast<std::size_t>(c)];
  for (int m = 0; m < grid.steps(); ++m) {
    for (int c = 0; c < dim; ++c) {
      out(0, m + 1, c) =
          out(0, m, c) + scale * increments[static_cast<std::size_t>(m * dim + c)];
    }
  }
  return out;
}

// =============================================================================
// DriftSpec
// =============================================================================

DriftSpec::DriftSpec(std::string name, int dim, Fn fn, double bound, std::optional<double> lip_x,
                     Smoothness tag)
    : name_(std::move(name)), dim_(dim), fn_(std::move(fn)), bound_(bound), lip_x_(lip_x),
      tag_(tag) {
  if (dim < 1) throw ConfigError("drift: dimension must be >= 1");
  if (!(bound >= 0.0)) throw ConfigError("drift: bound must be nonnegative");
  if (lip_x && !(*lip_x >= 0.0)) throw ConfigError("drift: Lipschitz constant must be >= 0");
  if (tag == Smoothness::lipschitz_x && !lip_x) {
    throw ConfigError("drift: a Lipschitz-tagged drift needs its constant");
  }
}

void DriftSpec::operator()(const double* x, const double* z, double* out) const {
  fn_(x, z, out);
  double sq = 0.0;
  for (int c = 0; c < dim_; ++c) sq += out[c] * out[c];
  if (!(sq <= bound_ * bound_ * (1.0 + 1e-12) + 1e-300)) {
    std::ostringstream msg;
    msg << "drift '" << name_ << "' returned |b| = " << std::sqrt(sq) << " above its bound "
        << bound_;
    throw SolverError(msg.str(), std::sqrt(sq));
  }
}

double DriftSpec::operator()(double x, double z) const {
  if (dim_ != 1) throw PreconditionError("scalar drift evaluation needs dimension 1");
  double out = 0.0;
  (*this)(&x, &z, &out);
  return out;
}

namespace drifts {

DriftSpec zero(int dim) {
  return DriftSpec(
      "zero", dim, [dim](const double*, const double*, double* out) {
        std::fill(out, out + dim, 0.0);
      },
      0.0, 0.0, Smoothness::lipschitz_x);
}

DriftSpec constant(std::vector<double> c) {
  const int dim = static_cast<int>(c.size());
  double norm = 0.0;
  for (double v : c) norm += v * v;
  return DriftSpec(
      "constant", dim,
      [c = std::move(c)](const double*, const double*, double* out) {
        std::copy(c.begin(), c.end(), out);
      },
      std::sqrt(norm), 0.0, Smoothness::lipschitz_x);
}

DriftSpec tanh_gap(int dim) {
  return DriftSpec(
      "tanh_gap", dim,
      [dim](const double* x, const double* z, double* out) {
        for (int c = 0; c < dim; ++c) out[c] = std::tanh(z[c] - x[c]);
      },
      std::sqrt(static_cast<double>(dim)), 1.0, Smoothness::lipschitz_x);
}

DriftSpec neg_tanh_sum(int dim) {
  return DriftSpec(
      "neg_tanh_sum", dim,
      [dim](const double* x, const double* z, double* out) {
        for (int c = 0; c < dim; ++c) out[c] = -std::tanh(x[c] + z[c]);
      },
      std::sqrt(static_cast<double>(dim)), 1.0, Smoothness::lipschitz_x);
}

DriftSpec sign_gap(int dim) {
  return DriftSpec(
      "sign_gap", dim,
      [dim](const double* x, const double* z, double* out) {
        for (int c = 0; c < dim; ++c) out[c] = sign(z[c] - x[c]);
      },
      std::sqrt(static_cast<double>(dim)), std::nullopt, Smoothness::measurable);
}

DriftSpec tanh_of_z(int dim) {
  return DriftSpec(
      "tanh_of_z", dim,
      [dim](const double*, const double* z, double* out) {
        for (int c = 0; c < dim; ++c) out[c] = std::tanh(z[c]);
      },
      std::sqrt(static_cast<double>(dim)), 0.0, Smoothness::lipschitz_x);
}

}  // namespace drifts

namespace {

std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      while (used < item.size() && std::isspace(static_cast<unsigned char>(item[used]))) ++used;
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(what + ": cannot parse number '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError(what + ": empty list");
  return out;
}

}  // namespace

DriftSpec make_drift(const std::string& spec, int dim) {
  const auto colon = spec.find(':');
  const std::string head = spec.substr(0, colon);
  if (head == "zero") return drifts::zero(dim);
  if (head == "tanh_gap") return drifts::tanh_gap(dim);
  if (head == "neg_tanh_sum") return drifts::neg_tanh_sum(dim);
  if (head == "sign_gap") return drifts::sign_gap(dim);
  if (head == "tanh_of_z") return drifts::tanh_of_z(dim);
  if (head == "constant") {
    if (colon == std::string::npos) throw ConfigError("drift 'constant' needs a value");
    auto c = parse_list(spec.substr(colon + 1), "drift constant");
    if (c.size() == 1 && dim > 1) c.assign(static_cast<std::size_t>(dim), c[0]);
    return drifts::constant(std::move(c));
  }
  throw ConfigError("unknown drift '" + spec +
                    "' (known: zero, constant:<c>, tanh_gap, neg_tanh_sum, sign_gap, tanh_of_z)");
}

// =============================================================================
// InitialLaw
// =============================================================================

InitialLaw InitialLaw::atoms(int dim, std::vector<double> points, std::vector<double> weights) {
  if (dim < 1) throw ConfigError("initial law: dimension must be >= 1");
  if (weights.empty()) throw ConfigError("initial law: empty atom list");
  if (points.size() != weights.size() * static_cast<std::size_t>(dim)) {
    throw ConfigError("initial law: points and weights sizes disagree");
  }
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ConfigError("initial law: weights must be nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError("initial law: weights must sum to 1");
  for (double x : points) {
    if (!std::isfinite(x)) throw ConfigError("initial law: atoms must be finite");
  }

  InitialLaw law;
  law.kind_ = Kind::atoms;
  law.dim_ = dim;
  law.mean_.assign(static_cast<std::size_t>(dim), 0.0);
  for (std::size_t a = 0; a < weights.size(); ++a) {
    for (int c = 0; c < dim; ++c) {
      law.mean_[static_cast<std::size_t>(c)] +=
          weights[a] * points[a * static_cast<std::size_t>(dim) + static_cast<std::size_t>(c)];
    }
  }
  law.cumulative_.resize(weights.size());
  std::partial_sum(weights.begin(), weights.end(), law.cumulative_.begin());
  law.atoms_ = Atoms{dim, std::move(points), std::move(weights)};
  return law;
}

InitialLaw InitialLaw::two_point(std::vector<double> a, std::vector<double> b, double p) {
  if (a.size() != b.size() || a.empty()) {
    throw ConfigError("two-point law: endpoints must have the same positive dimension");
  }
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("two-point law: p must lie in [0, 1]");
  const int dim = static_cast<int>(a.size());
  std::vector<double> pts = a;
  pts.insert(pts.end(), b.begin(), b.end());
  InitialLaw law = atoms(dim, std::move(pts), {p, 1.0 - p});
  law.kind_ = Kind::two_point;
  for (int c = 0; c < dim; ++c) {
    const auto i = static_cast<std::size_t>(c);
    law.mean_[i] = p * a[i] + (1.0 - p) * b[i];
  }
  return law;
}

InitialLaw InitialLaw::gaussian(std::vector<double> mean, std::vector<double> covariance) {
  const auto d = mean.size();
  if (d == 0 || covariance.size() != d * d) {
    throw ConfigError("gaussian law: covariance must be d x d");
  }
  Eigen::MatrixXd cov = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                       Eigen::RowMajor>>(
      covariance.data(), static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success || !cov.isApprox(cov.transpose())) {
    throw ConfigError("gaussian law: covariance must be symmetric positive definite");
  }
  InitialLaw law;
  law.kind_ = Kind::gaussian;
  law.dim_ = static_cast<int>(d);
  law.mean_ = std::move(mean);
  law.cov_ = std::move(covariance);
  const Eigen::MatrixXd lower = llt.matrixL();
  law.chol_.resize(d * d);
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      law.chol_[i * d + j] = lower(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
  }
  return law;
}

Atoms InitialLaw::to_atoms(int nodes_per_dim) const {
  if (kind_ != Kind::gaussian) return atoms_;
  if (nodes_per_dim < 1) throw ConfigError("quadrature needs at least one node");

  // Golub-Welsch for the standard normal weight.
  const int n = nodes_per_dim;
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    jacobi(i, i - 1) = jacobi(i - 1, i) = std::sqrt(static_cast<double>(i));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  std::vector<double> nodes(static_cast<std::size_t>(n));
  std::vector<double> wts(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    nodes[static_cast<std::size_t>(i)] = eig.eigenvalues()(i);
    const double v = eig.eigenvectors()(0, i);
    wts[static_cast<std::size_t>(i)] = v * v;
  }

  const int d = dim_;
  std::size_t count = 1;
  for (int c = 0; c < d; ++c) count *= static_cast<std::size_t>(n);
  Atoms out;
  out.dim = d;
  out.points.resize(count * static_cast<std::size_t>(d));
  out.weights.resize(count);
  std::vector<double> xi(static_cast<std::size_t>(d));
  for (std::size_t idx = 0; idx < count; ++idx) {
    std::size_t rest = idx;
    double w = 1.0;
    for (int c = 0; c < d; ++c) {
      const auto j = rest % static_cast<std::size_t>(n);
      rest /= static_cast<std::size_t>(n);
      xi[static_cast<std::size_t>(c)] = nodes[j];
      w *= wts[j];
    }
    out.weights[idx] = w;
    for (int i = 0; i < d; ++i) {
      double v = mean_[static_cast<std::size_t>(i)];
      for (int j = 0; j <= i; ++j) {
        v += chol_[static_cast<std::size_t>(i * d + j)] * xi[static_cast<std::size_t>(j)];
      }
      out.points[idx * static_cast<std::size_t>(d) + static_cast<std::size_t>(i)] = v;
    }
  }
  const double total = std::accumulate(out.weights.begin(), out.weights.end(), 0.0);
  for (double& w : out.weights) w /= total;
  return out;
}

double InitialLaw::centered_support_radius() const {
  if (kind_ == Kind::gaussian) {
    double max_var = 0.0;
    for (int c = 0; c < dim_; ++c) max_var = std::max(max_var, cov_[static_cast<std::size_t>(c * dim_ + c)]);
    return 8.0 * std::sqrt(max_var);
  }
  double r = 0.0;
  for (int a = 0; a < atoms_.size(); ++a) {
    if (atoms_.weights[static_cast<std::size_t>(a)] == 0.0) continue;
    double sq = 0.0;
    const auto p = atoms_.point(a);
    for (int c = 0; c < dim_; ++c) {
      const double diff = p[static_cast<std::size_t>(c)] - mean_[static_cast<std::size_t>(c)];
      sq += diff * diff;
    }
    r = std::max(r, std::sqrt(sq));
  }
  return r;
}

void InitialLaw::sample_one(RngStream& rng, std::span<double> out) const {
  if (out.size() != static_cast<std::size_t>(dim_)) {
    throw PreconditionError("sample_one: output size must equal the dimension");
  }
  if (kind_ == Kind::gaussian) {
    std::vector<double> xi(static_cast<std::size_t>(dim_));
    for (double& v : xi) v = rng.normal();
    for (int i = 0; i < dim_; ++i) {
      double v = mean_[static_cast<std::size_t>(i)];
      for (int j = 0; j <= i; ++j) {
        v += chol_[static_cast<std::size_t>(i * dim_ + j)] * xi[static_cast<std::size_t>(j)];
      }
      out[static_cast<std::size_t>(i)] = v;
    }
    return;
  }
  const double u = rng.uniform() * cumulative_.back();
  auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  auto a = static_cast<int>(it - cumulative_.begin());
  a = std::min(a, atoms_.size() - 1);
  const auto p = atoms_.point(a);
  std::copy(p.begin(), p.end(), out.begin());
}

std::vector<double> InitialLaw::sample(int n, RngStream& rng) const {
  if (n < 1) throw ConfigError("sample_initial: need at least one draw");
  std::vector<double> out(static_cast<std::size_t>(n) * static_cast<std::size_t>(dim_));
  for (int i = 0; i < n; ++i) {
    sample_one(rng, std::span<double>(out.data() + static_cast<std::size_t>(i * dim_),
                                      static_cast<std::size_t>(dim_)));
  }
  return out;
}

std::vector<double> sample_initial(const InitialLaw& law, int n, RngStream& rng) {
  return law.sample(n, rng);
}

InitialLaw make_initial_law(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) {
    throw ConfigError("initial law '" + spec + "': expected <family>:<parameters>");
  }
  const std::string head = spec.substr(0, colon);
  const std::string body = spec.substr(colon + 1);
  if (head == "two_point") {
    const auto v = parse_list(body, "two_point law");
    if (v.size() != 3) throw ConfigError("two_point law needs a,b,p");
    return InitialLaw::two_point({v[0]}, {v[1]}, v[2]);
  }
  if (head == "gaussian") {
    const auto v = parse_list(body, "gaussian law");
    if (v.size() != 2) throw ConfigError("gaussian law needs mean,variance");
    return InitialLaw::gaussian({v[0]}, {v[1]});
  }
  if (head == "atoms") {
    const auto semi = body.find(';');
    if (semi == std::string::npos) throw ConfigError("atoms law needs points;weights");
    auto pts = parse_list(body.substr(0, semi), "atoms law points");
    auto wts = parse_list(body.substr(semi + 1), "atoms law weights");
    return InitialLaw::atoms(1, std::move(pts), std::move(wts));
  }
  throw ConfigError("unknown initial law family '" + head + "' (known: two_point, gaussian, atoms)");
}

// =============================================================================
// SimConfig
// =============================================================================

void SimConfig::validate() const {
  if (!(sigma0 > 0.0)) throw ConfigError("sigma0 must be positive");
  if (!(sigma >= 0.0)) throw ConfigError("sigma must be nonnegative");
  if (N < 1) throw ConfigError("N must be at least 1");
  if (k < 1 || k > N) throw ConfigError("k must satisfy 1 <= k <= N");
  if (drift.dim() != init.dim()) throw ConfigError("drift and initial law dimensions differ");
}

void SimConfig::validate_case_a() const {
  validate();
  if (sigma != 0.0) throw ConfigError("case A requires sigma = 0");
  if (!drift.is_lipschitz()) {
    throw ConfigError("case A requires a drift Lipschitz in its first variable");
  }
}

void SimConfig::validate_case_b() const {
  validate();
  if (!(sigma > 0.0)) throw ConfigError("case B requires sigma > 0");
}

}  // namespace condmkv
