#pragma once

/// \file care.hpp
/// Continuous algebraic Riccati equation A'P + PA + Q - P B R^{-1} B' P = 0
/// solved with the scaled matrix sign function, optional Newton-Kleinman
/// refinement, and sign-function stability certificates.

#include "cpsdre/tensor.hpp"

#include <optional>

namespace cpsdre {

struct CareProblem {
  Matrix A;
  Matrix B;
  Matrix Q;
  Matrix R;

  /// Checks shapes, symmetry of Q and R to 1e-12 and that R is positive
  /// definite.
  void validate() const;
};

/// State-independent CARE data, computed once per SDRE run.
struct CareConstants {
  Matrix Q;
  /// R^{-1} B'.
  Matrix RinvBt;
  /// B R^{-1} B'.
  Matrix S;
  /// R itself, for the gain-dependent Lyapunov right-hand side.
  Matrix R;

  static CareConstants from(const Matrix& B, const Matrix& Q, const Matrix& R);
};

struct CareSolution {
  /// Stabilizing solution, symmetric.
  Matrix Pi;
  /// Gain K = -R^{-1} B' Pi.
  Matrix K;
  /// ||A'Pi + Pi A + Q - Pi B R^{-1} B' Pi||_F.
  double residual = 0.0;
  /// residual / (||A||_F ||Pi||_F + ||Q||_F).
  double relative_residual = 0.0;
  bool stable = false;
  int sign_iterations = 0;
  int newton_steps = 0;
};

struct CareOptions {
  int max_sign_iters = 100;
  double sign_tol = 1e-12;
  /// Newton-Kleinman refinement runs when the relative residual exceeds this.
  double refine_above = 1e-10;
  int newton_steps = 2;
  /// Compute the closed-loop stability certificate.
  bool certify = true;
};

struct SignResult {
  Matrix S;
  int iterations = 0;
  double last_change = 0.0;
  bool converged = false;
};

/// Newton iteration Z <- (cZ + (cZ)^{-1})/2 with determinant scaling
/// c = |det Z|^{-1/n}, stopped when ||Z_{k+1} - Z_k||_1 < tol ||Z_k||_1.
/// Throws NumericalError on a singular iterate. Non-convergence is reported
/// through `converged`.
SignResult matrix_sign(const Matrix& Z, int max_iters = 100, double tol = 1e-12);

/// Solves F'X + XF + C = 0 for stable F with the sign-function iteration.
Matrix solve_lyapunov(const Matrix& F, const Matrix& C);

/// ||A'Pi + Pi A + Q - Pi S Pi||_F with S = B R^{-1} B'.
double care_residual(const Matrix& A, const Matrix& S, const Matrix& Q, const Matrix& Pi);

CareSolution solve_care(const CareProblem& p, const CareOptions& opts = {});
CareSolution solve_care(const Matrix& A, const CareConstants& k, const CareOptions& opts = {});

enum class StabilityVerdict { stable, unstable, indeterminate };

struct StabilityCertificate {
  StabilityVerdict verdict = StabilityVerdict::indeterminate;
  /// Limit of the sign iteration on A + BK (empty when it broke down).
  Matrix sign_limit;
  /// max |sign(A + BK) + I| entry.
  double distance_to_minus_identity = 0.0;
  /// Trace/determinant verdict for n <= 2.
  std::optional<bool> routh_hurwitz;

  bool stable() const { return verdict == StabilityVerdict::stable; }
};

/// Certifies Re(lambda(A + BK)) < 0 via sign(A + BK) = -I to 1e-8, with the
/// Routh-Hurwitz cross-check for n <= 2. A disagreement between the two
/// yields `indeterminate`.
StabilityCertificate stability_margin(const Matrix& A, const Matrix& B, const Matrix& K);

}  // namespace cpsdre
