#include "cpsdre/care.hpp"

#include "cpsdre/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace cpsdre {

namespace {

double norm1(const Matrix& m) { return m.cwiseAbs().colwise().sum().maxCoeff(); }

bool is_symmetric(const Matrix& m, double tol) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

StabilityCertificate certify(const Matrix& F) {
  StabilityCertificate cert;
  const Eigen::Index n = F.rows();
  if (n <= 2) {
    const double tr = F.trace();
    cert.routh_hurwitz = n == 1 ? (F(0, 0) < 0.0) : (tr < 0.0 && F.determinant() > 0.0);
  }
  bool sign_ok = false;
  bool sign_stable = false;
  try {
    const SignResult sr = matrix_sign(F);
    if (sr.converged) {
      cert.sign_limit = sr.S;
      cert.distance_to_minus_identity = (sr.S + Matrix::Identity(n, n)).cwiseAbs().maxCoeff();
      sign_ok = true;
      sign_stable = cert.distance_to_minus_identity <= 1e-8;
    }
  } catch (const NumericalError&) {
    sign_ok = false;
  }
  if (!sign_ok) {
    cert.verdict = StabilityVerdict::indeterminate;
  } else if (cert.routh_hurwitz && *cert.routh_hurwitz != sign_stable) {
    cert.verdict = StabilityVerdict::indeterminate;
  } else {
    cert.verdict = sign_stable ? StabilityVerdict::stable : StabilityVerdict::unstable;
  }
  return cert;
}

}  // namespace

void CareProblem::validate() const {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || n == 0) throw std::invalid_argument("CARE: A must be square and nonempty");
  if (B.rows() != n) throw std::invalid_argument("CARE: B must have as many rows as A");
  if (Q.rows() != n || Q.cols() != n) throw std::invalid_argument("CARE: Q must be n x n");
  if (R.rows() != B.cols() || R.cols() != B.cols()) throw std::invalid_argument("CARE: R must be m x m");
  if (!is_symmetric(Q, 1e-12)) throw std::invalid_argument("CARE: Q must be symmetric");
  if (!is_symmetric(R, 1e-12)) throw std::invalid_argument("CARE: R must be symmetric");
  if (B.cols() > 0 && Eigen::LLT<Matrix>(R).info() != Eigen::Success) {
    throw std::invalid_argument("CARE: R must be positive definite");
  }
}

CareConstants CareConstants::from(const Matrix& B, const Matrix& Q, const Matrix& R) {
  CareConstants k;
  k.Q = Q;
  k.R = R;
  if (B.cols() == 0) {
    k.RinvBt = Matrix::Zero(0, B.rows());
    k.S = Matrix::Zero(B.rows(), B.rows());
    return k;
  }
  Eigen::LLT<Matrix> llt(R);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("CARE: R must be positive definite");
  k.RinvBt = llt.solve(B.transpose());
  k.S = B * k.RinvBt;
  k.S = 0.5 * (k.S + k.S.transpose());
  return k;
}

SignResult matrix_sign(const Matrix& Z, int max_iters, double tol) {
  const Eigen::Index n = Z.rows();
  if (Z.cols() != n) throw std::invalid_argument("matrix_sign: matrix must be square");
  SignResult res;
  Matrix Zk = Z;
  double prev_change = std::numeric_limits<double>::infinity();
  for (int it = 1; it <= max_iters; ++it) {
    Eigen::PartialPivLU<Matrix> lu(Zk);
    const Vector d = lu.matrixLU().diagonal().cwiseAbs();
    const double dmax = d.maxCoeff();
    if (!(d.minCoeff() > std::numeric_limits<double>::epsilon() * static_cast<double>(n) * dmax)) {
      throw NumericalError("matrix sign iteration hit a singular iterate at step " + std::to_string(it));
    }
    const double logdet = d.array().log().sum();
    const double c = std::exp(-logdet / static_cast<double>(n));
    Matrix next = 0.5 * (c * Zk + lu.inverse() / c);
    const double change = norm1(next - Zk);
    const double ref = norm1(Zk);
    Zk = std::move(next);
    res.iterations = it;
    res.last_change = change / ref;
    if (change < tol * ref) {
      res.converged = true;
      break;
    }
    // Once the quadratic phase is over, rounding keeps the change from
    // shrinking further; accept the limit when it has stalled at a level
    // consistent with the conditioning.
    if (change < 1e-9 * ref && change >= 0.5 * prev_change) {
      res.converged = true;
      break;
    }
    prev_change = change;
  }
  if (!Zk.allFinite()) throw NumericalError("matrix sign iteration produced non-finite values");
  res.S = std::move(Zk);
  return res;
}

Matrix solve_lyapunov(const Matrix& F, const Matrix& C) {
  const Eigen::Index n = F.rows();
  if (F.cols() != n || C.rows() != n || C.cols() != n) {
    throw std::invalid_argument("solve_lyapunov: shapes must be n x n");
  }
  // A X + X A' + C = 0 with A = F' (Roberts' sign-function iteration).
  Matrix Ak = F.transpose();
  Matrix Ck = C;
  for (int it = 1; it <= 100; ++it) {
    Eigen::PartialPivLU<Matrix> lu(Ak);
    const Vector d = lu.matrixLU().diagonal().cwiseAbs();
    if (!(d.minCoeff() > std::numeric_limits<double>::epsilon() * static_cast<double>(n) * d.maxCoeff())) {
      throw NumericalError("Lyapunov sign iteration hit a singular iterate");
    }
    const double c = std::exp(-d.array().log().sum() / static_cast<double>(n));
    const Matrix Ainv = lu.inverse();
    Matrix Anext = 0.5 * (c * Ak + Ainv / c);
    Ck = 0.5 * (c * Ck + Ainv * Ck * Ainv.transpose() / c);
    const double change = norm1(Anext - Ak);
    const double ref = norm1(Ak);
    Ak = std::move(Anext);
    if (change < 1e-13 * ref) break;
  }
  if ((Ak + Matrix::Identity(n, n)).cwiseAbs().maxCoeff() > 1e-6) {
    throw NumericalError("Lyapunov sign iteration: operator is not stable");
  }
  Matrix X = 0.5 * Ck;
  return 0.5 * (X + X.transpose());
}

double care_residual(const Matrix& A, const Matrix& S, const Matrix& Q, const Matrix& Pi) {
  return (A.transpose() * Pi + Pi * A + Q - Pi * S * Pi).norm();
}

CareSolution solve_care(const Matrix& A, const CareConstants& k, const CareOptions& opts) {
  const Eigen::Index n = A.rows();
  if (A.cols() != n || k.S.rows() != n || k.Q.rows() != n) {
    throw std::invalid_argument("solve_care: inconsistent dimensions");
  }
  Matrix H(2 * n, 2 * n);
  H.topLeftCorner(n, n) = A;
  H.topRightCorner(n, n) = -k.S;
  H.bottomLeftCorner(n, n) = -k.Q;
  H.bottomRightCorner(n, n) = -A.transpose();

  const SignResult sr = matrix_sign(H, opts.max_sign_iters, opts.sign_tol);
  if (!sr.converged) {
    throw NumericalError("CARE sign iteration did not converge in " +
                         std::to_string(opts.max_sign_iters) + " steps (last relative change " +
                         std::to_string(sr.last_change) + ")");
  }
  const Matrix& W = sr.S;
  const Matrix I = Matrix::Identity(n, n);
  Matrix lhs(2 * n, n), rhs(2 * n, n);
  lhs.topRows(n) = W.topRightCorner(n, n);
  lhs.bottomRows(n) = W.bottomRightCorner(n, n) + I;
  rhs.topRows(n) = -(W.topLeftCorner(n, n) + I);
  rhs.bottomRows(n) = -W.bottomLeftCorner(n, n);

  CareSolution sol;
  sol.sign_iterations = sr.iterations;
  sol.Pi = lhs.colPivHouseholderQr().solve(rhs);
  sol.Pi = 0.5 * (sol.Pi + sol.Pi.transpose());
  if (!sol.Pi.allFinite()) throw NumericalError("CARE: extracted solution is not finite");

  const double scale_q = k.Q.norm();
  auto relative = [&](const Matrix& Pi, double res) {
    const double denom = A.norm() * Pi.norm() + scale_q;
    return denom > 0.0 ? res / denom : res;
  };
  sol.residual = care_residual(A, k.S, k.Q, sol.Pi);
  sol.relative_residual = relative(sol.Pi, sol.residual);

  if (sol.relative_residual > opts.refine_above) {
    for (int step = 0; step < opts.newton_steps; ++step) {
      const Matrix F = A - k.S * sol.Pi;
      Matrix next;
      try {
        next = solve_lyapunov(F, k.Q + sol.Pi * k.S * sol.Pi);
      } catch (const NumericalError&) {
        break;
      }
      const double res = care_residual(A, k.S, k.Q, next);
      if (!(res < sol.residual)) break;
      sol.Pi = std::move(next);
      sol.residual = res;
      sol.relative_residual = relative(sol.Pi, res);
      sol.newton_steps = step + 1;
    }
  }
  if (!(sol.relative_residual < 1e-8)) {
    throw NumericalError("CARE residual " + std::to_string(sol.residual) +
                         " exceeds 1e-8 (||A|| ||Pi|| + ||Q||)");
  }
  sol.K = -(k.RinvBt * sol.Pi);
  if (opts.certify) sol.stable = certify(A - k.S * sol.Pi).stable();
  return sol;
}

CareSolution solve_care(const CareProblem& p, const CareOptions& opts) {
  p.validate();
  return solve_care(p.A, CareConstants::from(p.B, p.Q, p.R), opts);
}

StabilityCertificate stability_margin(const Matrix& A, const Matrix& B, const Matrix& K) {
  if (A.rows() != A.cols() || B.rows() != A.rows() || K.rows() != B.cols() || K.cols() != A.cols()) {
    throw std::invalid_argument("stability_margin: inconsistent shapes");
  }
  return certify(A + B * K);
}

}  // namespace cpsdre
