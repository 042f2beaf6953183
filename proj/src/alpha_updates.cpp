#include "cpsdre/cp_solvers.hpp"
#include "cpsdre/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cpsdre {

Vector soft_threshold(const Vector& z, double tau) {
  if (!(tau >= 0.0)) throw std::invalid_argument("soft_threshold: tau must be nonnegative");
  Vector out(z.size());
  for (Eigen::Index n = 0; n < z.size(); ++n) {
    const double mag = std::abs(z(n)) - tau;
    out(n) = mag > 0.0 ? std::copysign(mag, z(n)) : 0.0;
  }
  return out;
}

NormalEquations normal_equations(const Vector& t_vec, const Matrix& q) {
  if (q.cols() != t_vec.size()) {
    throw std::invalid_argument("normal_equations: q must have one column per data entry");
  }
  return {q * q.transpose(), q * t_vec, t_vec.squaredNorm()};
}

NormalEquations normal_equations(const Tensor3& t, const Matrix& X, const Matrix& Y,
                                 const Matrix& Z) {
  NormalEquations ne;
  ne.gram = (X.transpose() * X).cwiseProduct(Y.transpose() * Y).cwiseProduct(Z.transpose() * Z);
  ne.qt = kernels::parallel::rank_one_inner(t, X, Y, Z);
  const double n = frob_norm(t);
  ne.t_norm_sq = n * n;
  return ne;
}

double lipschitz_bound(const Matrix& gram, int iters) {
  if (gram.rows() == 0) return 0.0;
  Vector v = Vector::Ones(gram.rows());
  // A slight tilt keeps the start from being orthogonal to the dominant
  // eigenvector in symmetric configurations.
  for (Eigen::Index n = 0; n < v.size(); ++n) v(n) += 1e-3 * static_cast<double>(n + 1);
  v.normalize();
  double est = 0.0;
  for (int it = 0; it < iters; ++it) {
    Vector w = gram * v;
    const double nw = w.norm();
    if (nw == 0.0) return 0.0;
    est = v.dot(w);
    v = w / nw;
  }
  return std::max(est, (gram * v).norm());
}

Vector ista_alpha_update(const NormalEquations& ne, const Vector& alpha, double lambda,
                         double step) {
  if (!(step > 0.0)) throw std::invalid_argument("ista_alpha_update: step must be positive");
  if (!(lambda >= 0.0)) throw std::invalid_argument("ista_alpha_update: lambda must be nonnegative");
  const Vector grad = ne.gram * alpha - ne.qt;
  return soft_threshold(alpha - grad / step, lambda / step);
}

Vector ista_alpha_update(const Vector& t_vec, const Matrix& q, const Vector& alpha, double lambda,
                         std::optional<double> step) {
  if (q.cols() != t_vec.size() || q.rows() != alpha.size()) {
    throw std::invalid_argument("ista_alpha_update: shape mismatch");
  }
  const double s = step ? *step : lipschitz_bound(q * q.transpose());
  if (!(s > 0.0)) throw std::invalid_argument("ista_alpha_update: step must be positive");
  if (!(lambda >= 0.0)) throw std::invalid_argument("ista_alpha_update: lambda must be nonnegative");
  const Vector residual = q.transpose() * alpha - t_vec;
  const Vector grad = q * residual;
  return soft_threshold(alpha - grad / s, lambda / s);
}

Vector ista_lasso(const NormalEquations& ne, Vector alpha, double lambda, double step,
                  std::size_t max_iters, double rel_tol) {
  if (!(step > 0.0)) return Vector::Zero(alpha.size());
  for (std::size_t it = 0; it < max_iters; ++it) {
    Vector next = ista_alpha_update(ne, alpha, lambda, step);
    const double change = (next - alpha).norm();
    alpha = std::move(next);
    if (change <= rel_tol * std::max(alpha.norm(), std::numeric_limits<double>::min())) break;
  }
  return alpha;
}

BidiagState golub_kahan(const Matrix& A, const Vector& b, std::size_t steps) {
  if (b.size() != A.rows()) throw std::invalid_argument("golub_kahan: b must match A's rows");
  const Eigen::Index m = A.rows(), n = A.cols();
  const auto k = static_cast<Eigen::Index>(std::min<std::size_t>(steps, static_cast<std::size_t>(n)));
  BidiagState st;
  st.beta1 = b.norm();
  st.M = Matrix::Zero(k + 1, k);
  st.U = Matrix::Zero(m, k + 1);
  st.V = Matrix::Zero(n, k);
  if (k == 0 || st.beta1 == 0.0) {
    st.M.resize(1, 0);
    st.U = Matrix::Zero(m, 1);
    if (st.beta1 > 0.0) st.U.col(0) = b / st.beta1;
    st.V.resize(n, 0);
    return st;
  }
  const double tol = 1e-14 * std::max(A.norm(), std::numeric_limits<double>::min());

  st.U.col(0) = b / st.beta1;
  Vector v = A.transpose() * st.U.col(0);
  double a = v.norm();
  if (a <= tol) {
    st.breakdown = true;
    st.M.resize(1, 0);
    st.U.conservativeResize(m, 1);
    st.V.resize(n, 0);
    return st;
  }
  st.V.col(0) = v / a;
  st.M(0, 0) = a;

  Eigen::Index done = 0;
  for (Eigen::Index j = 0; j < k; ++j) {
    Vector u = A * st.V.col(j) - st.M(j, j) * st.U.col(j);
    for (int pass = 0; pass < 2; ++pass) {
      u -= st.U.leftCols(j + 1) * (st.U.leftCols(j + 1).transpose() * u);
    }
    const double beta = u.norm();
    done = j + 1;
    if (beta <= tol) {
      st.breakdown = true;
      break;
    }
    st.M(j + 1, j) = beta;
    st.U.col(j + 1) = u / beta;
    if (j + 1 == k) break;

    v = A.transpose() * st.U.col(j + 1) - beta * st.V.col(j);
    for (int pass = 0; pass < 2; ++pass) {
      v -= st.V.leftCols(j + 1) * (st.V.leftCols(j + 1).transpose() * v);
    }
    a = v.norm();
    if (a <= tol) {
      st.breakdown = true;
      break;
    }
    st.V.col(j + 1) = v / a;
    st.M(j + 1, j + 1) = a;
  }
  st.steps = static_cast<std::size_t>(done);
  st.M.conservativeResize(done + 1, done);
  st.U.conservativeResize(m, done + 1);
  st.V.conservativeResize(n, done);
  return st;
}

namespace {

HybridResult hybrid_core(const Matrix& A, const Vector& b, const Vector& alpha,
                         std::size_t gk_steps, const HybridOptions& opts) {
  const Eigen::Index R = A.cols();
  if (alpha.size() != R) throw std::invalid_argument("flexible hybrid: alpha length mismatch");
  if (gk_steps < 1 || gk_steps > static_cast<std::size_t>(R)) {
    throw std::invalid_argument("flexible hybrid: gk_steps must lie in [1, R]");
  }
  if (opts.fixed_lambda && !(*opts.fixed_lambda >= 0.0)) {
    throw std::invalid_argument("flexible hybrid: fixed lambda must be nonnegative");
  }

  Vector linv(R);
  for (Eigen::Index r = 0; r < R; ++r) {
    linv(r) = (opts.freeze_zeros && alpha(r) == 0.0) ? 0.0 : std::sqrt(std::abs(alpha(r)) + opts.eps_w);
  }
  const Matrix Aop = A * linv.asDiagonal();

  HybridResult res;
  res.state = golub_kahan(Aop, b, gk_steps);
  res.state.Zk = linv.asDiagonal() * res.state.V;
  res.alpha = Vector::Zero(R);
  const double beta1 = res.state.beta1;
  const auto k = static_cast<Eigen::Index>(res.state.steps);
  if (k == 0) {
    res.lambda = opts.fixed_lambda.value_or(0.0);
    return res;
  }

  Eigen::JacobiSVD<Matrix> svd(res.state.M, Eigen::ComputeFullU | Eigen::ComputeThinV);
  const Vector& sigma = svd.singularValues();
  const Matrix& Us = svd.matrixU();
  // Coefficients of beta1*e1 in the left singular basis.
  const Vector g = beta1 * Us.row(0).head(sigma.size()).transpose();
  const double outside = std::max(beta1 * beta1 - g.squaredNorm(), 0.0);

  auto solve_y = [&](double lam) {
    Vector coef = Vector::Zero(sigma.size());
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
      const double den = sigma(i) * sigma(i) + lam;
      if (den > 0.0) coef(i) = sigma(i) * g(i) / den;
    }
    return Vector(svd.matrixV() * coef);
  };

  double lambda = 0.0;
  if (opts.fixed_lambda) {
    lambda = *opts.fixed_lambda;
  } else {
    double best = std::numeric_limits<double>::infinity();
    const double lo = std::log10(opts.grid_min), hi = std::log10(opts.grid_max);
    for (int p = 0; p < opts.grid_points; ++p) {
      const double frac = opts.grid_points > 1 ? static_cast<double>(p) / (opts.grid_points - 1) : 0.0;
      const double lam = std::pow(10.0, lo + (hi - lo) * frac) * beta1;
      double res2 = outside, filt = 0.0;
      for (Eigen::Index i = 0; i < sigma.size(); ++i) {
        const double s2 = sigma(i) * sigma(i);
        const double damp = lam / (s2 + lam);
        res2 += damp * damp * g(i) * g(i);
        filt += s2 / (s2 + lam);
      }
      const double denom = static_cast<double>(k + 1) - filt;
      const double gcv = res2 / (denom * denom);
      if (gcv < best) {
        best = gcv;
        lambda = lam;
      }
    }
  }
  res.lambda = lambda;
  res.alpha = res.state.Zk * solve_y(lambda);
  return res;
}

}  // namespace

HybridResult flexible_hybrid_alpha_update(const Vector& t_vec, const Matrix& q, const Vector& alpha,
                                          std::size_t gk_steps, const HybridOptions& opts) {
  if (q.cols() != t_vec.size()) {
    throw std::invalid_argument("flexible hybrid: q must have one column per data entry");
  }
  return hybrid_core(q.transpose(), t_vec, alpha, gk_steps, opts);
}

HybridResult flexible_hybrid_alpha_update(const NormalEquations& ne, const Vector& alpha,
                                          std::size_t gk_steps, const HybridOptions& opts) {
  const Eigen::Index R = ne.gram.rows();
  if (ne.gram.cols() != R || ne.qt.size() != R) {
    throw std::invalid_argument("flexible hybrid: inconsistent normal equations");
  }
  // Gram matrix of [t, Q'] factored as C'C. The columns of C reproduce all
  // inner products among t and the rows of Q, so the least-squares problem
  // in C's coordinates is equivalent to the original one.
  Matrix big(R + 1, R + 1);
  big(0, 0) = ne.t_norm_sq;
  big.block(1, 0, R, 1) = ne.qt;
  big.block(0, 1, 1, R) = ne.qt.transpose();
  big.block(1, 1, R, R) = ne.gram;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(big);
  const Vector lam = eig.eigenvalues().cwiseMax(0.0);
  const Matrix C = lam.cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
  const Vector b = C.col(0);
  return hybrid_core(C.rightCols(R), b, alpha, gk_steps, opts);
}

}  // namespace cpsdre
