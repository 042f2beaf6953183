#include "cpsdre/allen_cahn.hpp"

#include "cpsdre/errors.hpp"
#include "cpsdre/rng.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#ifndef CPSDRE_DEFAULT_IC
#define CPSDRE_DEFAULT_IC "data/ic_default.csv"
#endif

namespace cpsdre {

namespace {

// Clamp range for spline initial conditions and the bound used to detect
// blow-up of the uncontrolled dynamics.
constexpr double kIcClamp = 1.5;
constexpr double kBlowUp = 1e6;

// Prefactored solver for a constant tridiagonal system (Thomas algorithm).
class Tridiagonal {
public:
  Tridiagonal(Vector lower, Vector diag, Vector upper)
      : lower_(std::move(lower)), upper_(std::move(upper)), cprime_(diag.size()), denom_(diag.size()) {
    const Eigen::Index n = diag.size();
    denom_(0) = diag(0);
    cprime_(0) = n > 1 ? upper_(0) / denom_(0) : 0.0;
    for (Eigen::Index i = 1; i < n; ++i) {
      denom_(i) = diag(i) - lower_(i - 1) * cprime_(i - 1);
      cprime_(i) = i + 1 < n ? upper_(i) / denom_(i) : 0.0;
    }
  }

  Vector solve(const Vector& rhs) const {
    const Eigen::Index n = rhs.size();
    Vector x(n);
    x(0) = rhs(0) / denom_(0);
    for (Eigen::Index i = 1; i < n; ++i) x(i) = (rhs(i) - lower_(i - 1) * x(i - 1)) / denom_(i);
    for (Eigen::Index i = n - 2; i >= 0; --i) x(i) -= cprime_(i) * x(i + 1);
    return x;
  }

private:
  Vector lower_, upper_, cprime_, denom_;
};

// I*(1 + shift) - scale*Lap as a tridiagonal system.
Tridiagonal implicit_operator(std::size_t nx, double dx, double scale, double shift) {
  const auto n = static_cast<Eigen::Index>(nx);
  const double w = scale / (dx * dx);
  Vector diag = Vector::Constant(n, 1.0 + shift + 2.0 * w);
  diag(0) = 1.0 + shift + w;
  diag(n - 1) = 1.0 + shift + w;
  Vector off = Vector::Constant(n - 1, -w);
  return Tridiagonal(off, diag, off);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string to_string(AcIntegrator i) {
  switch (i) {
    case AcIntegrator::explicit_euler: return "explicit_euler";
    case AcIntegrator::semi_implicit: return "semi_implicit";
    case AcIntegrator::stabilized_semi_implicit: return "stabilized_semi_implicit";
  }
  return "unknown";
}

AcIntegrator ac_integrator_from_string(const std::string& s) {
  if (s == "explicit_euler") return AcIntegrator::explicit_euler;
  if (s == "semi_implicit") return AcIntegrator::semi_implicit;
  if (s == "stabilized_semi_implicit") return AcIntegrator::stabilized_semi_implicit;
  throw std::invalid_argument("unknown Allen-Cahn integrator '" + s + "'");
}

void AcConfig::validate() const {
  if (nx < 3) throw std::invalid_argument("AcConfig: nx must be at least 3");
  if (nt < 2) throw std::invalid_argument("AcConfig: nt must be at least 2");
  if (xi == 0.0 || !std::isfinite(xi)) throw std::invalid_argument("AcConfig: xi must be nonzero");
  if (!(x_max > x_min)) throw std::invalid_argument("AcConfig: x_max must exceed x_min");
  if (!(t_max > t_min)) throw std::invalid_argument("AcConfig: t_max must exceed t_min");
  if (!std::isfinite(nu)) throw std::invalid_argument("AcConfig: nu must be finite");
}

double AcConfig::stabilization_constant() const {
  if (stabilization >= 0.0) return stabilization;
  return (3.0 * kIcClamp * kIcClamp - 1.0) * reaction() / 2.0;
}

void SnapshotConfig::validate() const {
  ac.validate();
  if (n_beta < 1) throw std::invalid_argument("SnapshotConfig: n_beta must be at least 1");
  if (!(beta_max >= beta_min)) throw std::invalid_argument("SnapshotConfig: beta_max < beta_min");
  if (!betas.empty() && betas.size() != n_beta) {
    throw std::invalid_argument("SnapshotConfig: explicit betas must have n_beta entries");
  }
}

Matrix laplacian(std::size_t nx, double dx) {
  if (nx < 3) throw std::invalid_argument("laplacian: nx must be at least 3");
  if (!(dx > 0.0)) throw std::invalid_argument("laplacian: dx must be positive");
  const auto n = static_cast<Eigen::Index>(nx);
  const double w = 1.0 / (dx * dx);
  Matrix L = Matrix::Zero(n, n);
  for (Eigen::Index i = 1; i + 1 < n; ++i) {
    L(i, i - 1) = w;
    L(i, i) = -2.0 * w;
    L(i, i + 1) = w;
  }
  L(0, 0) = -w;
  L(0, 1) = w;
  L(n - 1, n - 1) = -w;
  L(n - 1, n - 2) = w;
  return L;
}

Matrix assemble_A(const Vector& v, const AcConfig& cfg) {
  if (static_cast<std::size_t>(v.size()) != cfg.nx) {
    throw std::invalid_argument("assemble_A: state length must equal nx");
  }
  Matrix A = cfg.nu * laplacian(cfg.nx, cfg.dx());
  const double c = cfg.reaction();
  for (Eigen::Index i = 0; i < v.size(); ++i) A(i, i) += c * (1.0 - v(i) * v(i));
  return A;
}

Vector spatial_grid(const AcConfig& cfg) {
  return Vector::LinSpaced(static_cast<Eigen::Index>(cfg.nx), cfg.x_min, cfg.x_max);
}

Vector cubic_spline_ic(const std::vector<std::pair<double, double>>& points, const Vector& grid) {
  const std::size_t n = points.size();
  if (n < 4) throw std::invalid_argument("cubic_spline_ic: at least 4 points are required");
  for (std::size_t i = 1; i < n; ++i) {
    if (!(points[i].first > points[i - 1].first)) {
      throw std::invalid_argument("cubic_spline_ic: abscissae must be strictly increasing");
    }
  }
  const double lo = points.front().first, hi = points.back().first;
  const double slack = 1e-12 * std::max(1.0, hi - lo);

  // Second derivatives of the natural spline from the tridiagonal system.
  std::vector<double> h(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) h[i] = points[i + 1].first - points[i].first;
  const auto m = static_cast<Eigen::Index>(n - 2);
  Vector diag(m), rhs(m), off(std::max<Eigen::Index>(m - 1, 0));
  for (Eigen::Index r = 0; r < m; ++r) {
    const auto i = static_cast<std::size_t>(r + 1);
    diag(r) = 2.0 * (h[i - 1] + h[i]);
    rhs(r) = 6.0 * ((points[i + 1].second - points[i].second) / h[i] -
                    (points[i].second - points[i - 1].second) / h[i - 1]);
    if (r + 1 < m) off(r) = h[i];
  }
  const Vector inner = Tridiagonal(off, diag, off).solve(rhs);
  std::vector<double> M(n, 0.0);
  for (Eigen::Index r = 0; r < m; ++r) M[static_cast<std::size_t>(r + 1)] = inner(r);

  Vector out(grid.size());
  for (Eigen::Index g = 0; g < grid.size(); ++g) {
    const double x = grid(g);
    if (x < lo - slack || x > hi + slack) {
      throw std::invalid_argument("cubic_spline_ic: grid point outside the data range");
    }
    const auto it = std::upper_bound(points.begin(), points.end(), x,
                                     [](double v, const auto& p) { return v < p.first; });
    std::size_t i = static_cast<std::size_t>(std::distance(points.begin(), it));
    i = std::clamp<std::size_t>(i, 1, n - 1) - 1;
    const double a = points[i + 1].first - x, b = x - points[i].first, hi_ = h[i];
    const double val = M[i] * a * a * a / (6.0 * hi_) + M[i + 1] * b * b * b / (6.0 * hi_) +
                       (points[i].second / hi_ - M[i] * hi_ / 6.0) * a +
                       (points[i + 1].second / hi_ - M[i + 1] * hi_ / 6.0) * b;
    out(g) = std::clamp(val, -kIcClamp, kIcClamp);
  }
  return out;
}

std::vector<std::pair<double, double>> read_ic_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open initial-condition file " + path.string());
  std::string line;
  if (!std::getline(is, line)) {
    throw std::runtime_error("initial-condition file " + path.string() + " is empty");
  }
  std::vector<std::pair<double, double>> pts;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::istringstream ss(line);
    std::string a, b;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b)) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected 'x,v'");
    }
    try {
      std::size_t pa = 0, pb = 0;
      const std::string ta = trim(a), tb = trim(b);
      const double x = std::stod(ta, &pa), v = std::stod(tb, &pb);
      if (pa != ta.size() || pb != tb.size() || !std::isfinite(x) || !std::isfinite(v)) {
        throw std::invalid_argument("bad number");
      }
      pts.emplace_back(x, v);
    } catch (const std::exception&) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": malformed numeric value");
    }
  }
  return pts;
}

std::filesystem::path default_ic_path() { return CPSDRE_DEFAULT_IC; }

Vector initial_condition(const AcConfig& cfg) {
  cfg.validate();
  const Vector grid = spatial_grid(cfg);
  const auto n = static_cast<Eigen::Index>(cfg.nx);
  if (cfg.ic == "builtin:zero") return Vector::Zero(n);
  if (cfg.ic == "builtin:one") return Vector::Ones(n);
  const std::filesystem::path path = cfg.ic == "builtin:default" ? default_ic_path()
                                                                 : std::filesystem::path(cfg.ic);
  auto pts = read_ic_csv(path);
  // The shipped table lives on [0, 2]; rescale it onto the configured domain.
  if (cfg.ic == "builtin:default" && pts.size() >= 2) {
    const double a = pts.front().first, b = pts.back().first;
    for (auto& p : pts) p.first = cfg.x_min + (p.first - a) * (cfg.x_max - cfg.x_min) / (b - a);
  }
  try {
    return cubic_spline_ic(pts, grid);
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("initial-condition file " + path.string() + ": " + e.what());
  }
}

Matrix simulate_from(const AcConfig& cfg, const Vector& v0, double beta) {
  cfg.validate();
  if (static_cast<std::size_t>(v0.size()) != cfg.nx) {
    throw std::invalid_argument("simulate: initial state length must equal nx");
  }
  const auto nx = static_cast<Eigen::Index>(cfg.nx);
  const auto nt = static_cast<Eigen::Index>(cfg.nt);
  const double dt = cfg.dt(), dx = cfg.dx(), c = cfg.reaction();
  const double S = cfg.integrator == AcIntegrator::stabilized_semi_implicit
                       ? cfg.stabilization_constant()
                       : 0.0;
  const Matrix L = laplacian(cfg.nx, dx);
  const Tridiagonal implicit = implicit_operator(cfg.nx, dx, dt * cfg.nu, dt * S);

  Matrix out(nx, nt);
  Vector v = v0;
  out.col(0) = v;
  for (Eigen::Index n = 1; n < nt; ++n) {
    const Vector reaction = c * (v - v.cwiseProduct(v).cwiseProduct(v)) + beta * v;
    const Vector rate = cfg.nu * (L * v) + reaction;
    // Both implicit schemes solve for the increment: M (v' - v) = dt * rate
    // with M = I - dt*nu*Lap + dt*S is the same step as M v' = v + dt*(reaction
    // + S v), but the right side vanishes exactly at an equilibrium, so
    // solver rounding cannot seed the growth of unstable modes.
    if (cfg.integrator == AcIntegrator::explicit_euler) {
      v = v + dt * rate;
    } else {
      v = v + implicit.solve(dt * rate);
    }
    if (!v.allFinite() || v.cwiseAbs().maxCoeff() > kBlowUp) {
      throw NumericalError("Allen-Cahn state blew up at step " + std::to_string(n) +
                               " with integrator " + to_string(cfg.integrator) +
                               " (beta = " + std::to_string(beta) +
                               "); use stabilized_semi_implicit or a smaller time step");
    }
    out.col(n) = v;
  }
  return out;
}

Matrix simulate(const AcConfig& cfg, double beta) {
  return simulate_from(cfg, initial_condition(cfg), beta);
}

std::vector<double> sample_betas(const SnapshotConfig& cfg) {
  cfg.validate();
  if (!cfg.betas.empty()) return cfg.betas;
  Pcg32 rng(cfg.seed);
  std::vector<double> betas(cfg.n_beta);
  for (auto& b : betas) b = rng.uniform(cfg.beta_min, cfg.beta_max);
  return betas;
}

SnapshotData build_snapshot_tensor(const SnapshotConfig& cfg) {
  const std::vector<double> betas = sample_betas(cfg);
  const Vector v0 = initial_condition(cfg.ac);
  const std::size_t I = cfg.ac.nx, J = cfg.ac.nt, K = betas.size();
  Tensor3 t(I, J, K);
  std::vector<std::string> failures(K);
  std::vector<char> numerical(K, 0);
  double* data = t.data();
#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < K; ++k) {
    try {
      const Matrix slice = simulate_from(cfg.ac, v0, betas[k]);
      std::copy(slice.data(), slice.data() + I * J, data + I * J * k);
    } catch (const NumericalError& e) {
      failures[k] = e.what();
      numerical[k] = 1;
    } catch (const std::exception& e) {
      failures[k] = e.what();
    }
  }
  for (std::size_t k = 0; k < K; ++k) {
    if (!failures[k].empty()) {
      const std::string msg = "snapshot slice " + std::to_string(k) + " (beta = " +
                              std::to_string(betas[k]) + ") failed: " + failures[k];
      if (numerical[k]) throw NumericalError(msg);
      throw std::runtime_error(msg);
    }
  }
  return {std::move(t), betas};
}

}  // namespace cpsdre
