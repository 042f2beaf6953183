#pragma once

/// \file sdre.hpp
/// State-dependent Riccati feedback: at every step the CARE is solved at the
/// frozen state, u = K x with K = -R^{-1} B' Pi, and the closed loop is
/// advanced one step.

#include "cpsdre/care.hpp"
#include "cpsdre/rom.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cpsdre {

enum class Propagation {
  /// x+ = (I + dt (A + B K)) x.
  explicit_euler,
  /// (I - dt L) x+ = x + dt ((A - L) x + B u) for a constant stiff part L.
  semi_implicit_closed_loop,
};

std::string to_string(Propagation p);
Propagation propagation_from_string(const std::string& s);

struct SdreOptions {
  std::size_t nt = 1001;
  double t0 = 0.0;
  double t1 = 1.0;
  /// converged_at is the first time with ||C x||_inf below this.
  double stop_tol = 1e-14;
  /// Output map C for the convergence test; empty means the identity.
  /// Reduced runs pass P so convergence is judged on the lifted state.
  Matrix observe;
  Propagation propagation = Propagation::explicit_euler;
  /// Linear part treated implicitly by semi_implicit_closed_loop.
  Matrix implicit_part;
  /// Keep every gain matrix in the run.
  bool record_gains = false;
  /// Certify closed-loop stability at every step.
  bool certify = true;
};

struct SdreRun {
  Vector times;
  /// n x nt.
  Matrix states;
  /// m x (nt - 1); column i is K_i x_i.
  Matrix controls;
  std::vector<Matrix> gains;
  /// Trapezoid quadrature of x'Qx + u'Ru.
  double J = 0.0;
  /// x_N' Pi_{N-1} x_N.
  double J_terminal = 0.0;
  std::optional<double> converged_at;
  std::vector<double> residuals;
  std::vector<double> care_ms;
  std::vector<bool> stable;
  std::size_t unstable_steps = 0;
  double wall_ms = 0.0;
  std::string propagation;

  double mean_care_ms() const;
};

/// Runs the SDRE closed loop from x0 over nt uniform points of [t0, t1].
/// Throws NumericalError naming the step when a CARE solve fails or the
/// state stops being finite.
SdreRun sdre_trajectory(const StateMatrixFn& assemble_A, const Matrix& B, const Matrix& Q,
                        const Matrix& R, const Vector& x0, const SdreOptions& opts);

/// Trapezoid quadrature of x'Qx + u'Ru over the columns of `states`; the
/// last control is held over the final interval.
double running_cost(const Matrix& states, const Matrix& controls, const Matrix& Q, const Matrix& R,
                    double dt);

}  // namespace cpsdre
