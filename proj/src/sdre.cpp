#include "cpsdre/sdre.hpp"

#include "cpsdre/errors.hpp"

#include <chrono>
#include <numeric>
#include <stdexcept>
#include <string>

namespace cpsdre {

namespace {

using Clock = std::chrono::steady_clock;

double ms_between(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

}  // namespace

std::string to_string(Propagation p) {
  switch (p) {
    case Propagation::explicit_euler: return "explicit_euler";
    case Propagation::semi_implicit_closed_loop: return "semi_implicit_closed_loop";
  }
  return "unknown";
}

Propagation propagation_from_string(const std::string& s) {
  if (s == "explicit_euler" || s == "explicit") return Propagation::explicit_euler;
  if (s == "semi_implicit_closed_loop") return Propagation::semi_implicit_closed_loop;
  throw std::invalid_argument("unknown propagation scheme '" + s + "'");
}

double SdreRun::mean_care_ms() const {
  if (care_ms.empty()) return 0.0;
  return std::accumulate(care_ms.begin(), care_ms.end(), 0.0) / static_cast<double>(care_ms.size());
}

double running_cost(const Matrix& states, const Matrix& controls, const Matrix& Q, const Matrix& R,
                    double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("running_cost: dt must be positive");
  const Eigen::Index n = states.rows(), N = states.cols();
  if (Q.rows() != n || Q.cols() != n) throw std::invalid_argument("running_cost: Q shape mismatch");
  if (N < 2) return 0.0;
  if (controls.cols() != N - 1 || R.rows() != controls.rows() || R.cols() != controls.rows()) {
    throw std::invalid_argument("running_cost: controls must be m x (nt - 1) with R m x m");
  }
  auto integrand = [&](Eigen::Index i) {
    const Eigen::Index ui = std::min(i, N - 2);
    const double xq = states.col(i).dot(Q * states.col(i));
    const double ur = controls.rows() > 0 ? controls.col(ui).dot(R * controls.col(ui)) : 0.0;
    return xq + ur;
  };
  double J = 0.0;
  double left = integrand(0);
  for (Eigen::Index i = 1; i < N; ++i) {
    const double right = integrand(i);
    J += 0.5 * dt * (left + right);
    left = right;
  }
  return J;
}

SdreRun sdre_trajectory(const StateMatrixFn& assemble_A, const Matrix& B, const Matrix& Q,
                        const Matrix& R, const Vector& x0, const SdreOptions& opts) {
  if (opts.nt < 2) throw std::invalid_argument("sdre_trajectory: nt must be at least 2");
  if (!(opts.t1 > opts.t0)) throw std::invalid_argument("sdre_trajectory: t1 must exceed t0");
  const Eigen::Index n = x0.size(), m = B.cols();
  if (B.rows() != n) throw std::invalid_argument("sdre_trajectory: B rows must match the state");
  if (opts.observe.size() > 0 && opts.observe.cols() != n) {
    throw std::invalid_argument("sdre_trajectory: observe must have one column per state");
  }
  CareProblem{Matrix::Zero(n, n), B, Q, R}.validate();
  const CareConstants constants = CareConstants::from(B, Q, R);

  const auto N = static_cast<Eigen::Index>(opts.nt);
  const double dt = (opts.t1 - opts.t0) / static_cast<double>(N - 1);

  std::optional<Eigen::PartialPivLU<Matrix>> implicit_lu;
  if (opts.propagation == Propagation::semi_implicit_closed_loop) {
    if (opts.implicit_part.rows() != n || opts.implicit_part.cols() != n) {
      throw std::invalid_argument("sdre_trajectory: implicit_part must be n x n");
    }
    implicit_lu.emplace(Matrix(Matrix::Identity(n, n) - dt * opts.implicit_part));
  }

  SdreRun run;
  run.propagation = to_string(opts.propagation);
  run.times = Vector::LinSpaced(N, opts.t0, opts.t1);
  run.states = Matrix::Zero(n, N);
  run.controls = Matrix::Zero(m, N - 1);
  run.states.col(0) = x0;
  CareOptions copts;
  copts.certify = opts.certify;

  const auto start = Clock::now();
  Matrix last_pi = Matrix::Zero(n, n);
  auto check_converged = [&](Eigen::Index i) {
    if (run.converged_at) return;
    const double norm = opts.observe.size() > 0 ? (opts.observe * run.states.col(i)).cwiseAbs().maxCoeff()
                                                : run.states.col(i).cwiseAbs().maxCoeff();
    if (norm < opts.stop_tol) run.converged_at = run.times(i);
  };
  check_converged(0);

  for (Eigen::Index i = 0; i + 1 < N; ++i) {
    const Vector x = run.states.col(i);
    const Matrix A = assemble_A(x);
    CareSolution sol;
    const auto c0 = Clock::now();
    try {
      sol = solve_care(A, constants, copts);
    } catch (const NumericalError& e) {
      throw NumericalError("SDRE step " + std::to_string(i) + " (||x||_inf = " +
                           std::to_string(x.cwiseAbs().maxCoeff()) + "): " + e.what());
    }
    run.care_ms.push_back(ms_between(c0, Clock::now()));
    run.residuals.push_back(sol.residual);
    run.stable.push_back(sol.stable);
    if (opts.certify && !sol.stable) ++run.unstable_steps;

    const Vector u = sol.K * x;
    run.controls.col(i) = u;
    Vector next;
    if (opts.propagation == Propagation::explicit_euler) {
      next = x + dt * (A * x + B * u);
    } else {
      next = implicit_lu->solve(Vector(x + dt * ((A - opts.implicit_part) * x + B * u)));
    }
    if (!next.allFinite()) {
      throw NumericalError("SDRE state is not finite after step " + std::to_string(i) +
                           " with propagation " + run.propagation);
    }
    run.states.col(i + 1) = next;
    if (opts.record_gains) run.gains.push_back(sol.K);
    last_pi = std::move(sol.Pi);
    check_converged(i + 1);
  }
  run.wall_ms = ms_between(start, Clock::now());
  run.J = running_cost(run.states, run.controls, Q, R, dt);
  const Vector xN = run.states.col(N - 1);
  run.J_terminal = xN.dot(last_pi * xN);
  return run;
}

}  // namespace cpsdre
