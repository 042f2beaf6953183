#pragma once

/// \file allen_cahn.hpp
/// 1-D Allen-Cahn semi-discretization v' = A(v) v + beta v with
/// A(v) = nu*Lap + (1/(2 xi^2)) (I - diag(v^2)), Neumann ends by ghost
/// replication, and assembly of the snapshot tensor over sampled beta.

#include "cpsdre/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace cpsdre {

enum class AcIntegrator {
  /// v+ = v + dt (A(v) v + beta v).
  explicit_euler,
  /// Diffusion implicit, reaction explicit.
  semi_implicit,
  /// semi_implicit plus a linear stabilization term S(v+ - v) on the
  /// reaction, which keeps the stiff cubic stable at the default time step.
  stabilized_semi_implicit,
};

std::string to_string(AcIntegrator i);
AcIntegrator ac_integrator_from_string(const std::string& s);

struct AcConfig {
  double nu = 1.0;
  double xi = 0.02;
  std::size_t nx = 101;
  double x_min = 0.0;
  double x_max = 2.0;
  std::size_t nt = 550;
  double t_min = 0.0;
  double t_max = 1.0;
  AcIntegrator integrator = AcIntegrator::stabilized_semi_implicit;
  /// Stabilization constant for stabilized_semi_implicit. Negative selects
  /// the default (3*1.5^2 - 1) / (4 xi^2), half the Lipschitz constant of
  /// the reaction term on |v| <= 1.5.
  double stabilization = -1.0;
  /// Initial condition: "builtin:default", "builtin:zero", "builtin:one"
  /// or a path to a two-column CSV (x,v) with a header line.
  std::string ic = "builtin:default";

  void validate() const;
  double dx() const { return (x_max - x_min) / static_cast<double>(nx - 1); }
  double dt() const { return (t_max - t_min) / static_cast<double>(nt - 1); }
  /// Reaction coefficient 1/(2 xi^2).
  double reaction() const { return 1.0 / (2.0 * xi * xi); }
  double stabilization_constant() const;
};

struct SnapshotConfig {
  AcConfig ac;
  std::size_t n_beta = 50;
  double beta_min = -100.0;
  double beta_max = 100.0;
  std::uint64_t seed = 42;
  /// When non-empty, used instead of sampling (n_beta must match).
  std::vector<double> betas;

  void validate() const;
};

/// Second-difference matrix with rows (-1, 1)/dx^2 and (1, -1)/dx^2 at the
/// ends, so constants are in the kernel.
Matrix laplacian(std::size_t nx, double dx);

/// A(v) = nu*Lap + (1/(2 xi^2)) (I - diag(v_i^2)).
Matrix assemble_A(const Vector& v, const AcConfig& cfg);

/// Uniform grid of nx points on [x_min, x_max].
Vector spatial_grid(const AcConfig& cfg);

/// Natural cubic spline through (x, v) evaluated on grid, clamped to
/// [-1.5, 1.5]. Needs at least 4 strictly increasing abscissae.
Vector cubic_spline_ic(const std::vector<std::pair<double, double>>& points, const Vector& grid);

/// Reads a two-column CSV with a header line.
std::vector<std::pair<double, double>> read_ic_csv(const std::filesystem::path& path);

/// Path of the shipped default initial-condition table.
std::filesystem::path default_ic_path();

/// Initial state resolved from cfg.ic on the configured grid.
Vector initial_condition(const AcConfig& cfg);

/// nx x nt trajectory of v' = A(v) v + beta v from the configured initial
/// condition. Throws std::runtime_error on a non-finite state.
Matrix simulate(const AcConfig& cfg, double beta = 0.0);

/// Same from an explicit initial state.
Matrix simulate_from(const AcConfig& cfg, const Vector& v0, double beta = 0.0);

struct SnapshotData {
  Tensor3 tensor;
  std::vector<double> betas;
};

/// Samples beta uniformly (seeded) and stacks one simulated trajectory per
/// beta as frontal slices. Slices run in parallel with fixed placement.
SnapshotData build_snapshot_tensor(const SnapshotConfig& cfg);

/// The beta samples build_snapshot_tensor would use.
std::vector<double> sample_betas(const SnapshotConfig& cfg);

}  // namespace cpsdre
