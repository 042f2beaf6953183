#include "cpsdre/cp_solvers.hpp"
#include "cpsdre/errors.hpp"
#include "cpsdre/kernels.hpp"
#include "cpsdre/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cpsdre {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Rescales the columns of the three factors to a common norm per component.
// The model is unchanged; this only keeps the scales from drifting apart.
void balance_columns(Matrix& X, Matrix& Y, Matrix& Z) {
  for (Eigen::Index r = 0; r < X.cols(); ++r) {
    const double nx = X.col(r).norm(), ny = Y.col(r).norm(), nz = Z.col(r).norm();
    if (nx == 0.0 || ny == 0.0 || nz == 0.0) continue;
    const double g = std::cbrt(nx * ny * nz);
    X.col(r) *= g / nx;
    Y.col(r) *= g / ny;
    Z.col(r) *= g / nz;
  }
}

}  // namespace

void AlsConfig::validate() const {
  if (rank < 1) throw std::invalid_argument("ALS rank must be at least 1");
  if (!(tol > 0.0)) throw std::invalid_argument("ALS tol must be positive");
  if (max_iters < 1) throw std::invalid_argument("ALS max_iters must be at least 1");
}

Matrix khatri_rao_gram(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw std::invalid_argument("khatri_rao_gram: column counts differ");
  return (a.transpose() * a).cwiseProduct(b.transpose() * b);
}

Matrix solve_gram_system(const Matrix& rhs, const Matrix& gram) {
  if (gram.rows() != gram.cols() || rhs.cols() != gram.rows()) {
    throw std::invalid_argument("solve_gram_system: incompatible shapes");
  }
  const Eigen::Index R = gram.rows();
  Eigen::LLT<Matrix> llt(gram);
  if (llt.info() == Eigen::Success && llt.rcond() > 1e-13) {
    return llt.solve(rhs.transpose()).transpose();
  }
  const double tr = gram.trace();
  const double delta = tr > 0.0 ? 1e-12 * tr / static_cast<double>(R) : 1.0;
  const Matrix reg = gram + delta * Matrix::Identity(R, R);
  Eigen::LDLT<Matrix> ldlt(reg);
  Matrix sol = ldlt.solve(rhs.transpose()).transpose();
  if (!sol.allFinite()) sol = reg.completeOrthogonalDecomposition().solve(rhs.transpose()).transpose();
  return sol;
}

Matrix als_ls_update(const Matrix& unfolding, const Matrix& kr) {
  if (kr.rows() != unfolding.cols()) {
    throw std::invalid_argument("als_ls_update: kr rows must equal unfolding columns");
  }
  return solve_gram_system(unfolding * kr, kr.transpose() * kr);
}

AlsResult als(const Tensor3& t, const AlsConfig& cfg, const std::optional<CpFactors>& init) {
  cfg.validate();
  const std::size_t I = t.dim1(), J = t.dim2(), K = t.dim3();
  const std::size_t bound = std::min({I * J, I * K, J * K});
  if (cfg.rank > bound) {
    throw std::invalid_argument("ALS rank " + std::to_string(cfg.rank) +
                                " exceeds the unfolding bound " + std::to_string(bound));
  }

  AlsResult result;
  result.trace.solver = "als";
  const auto t0 = Clock::now();
  const auto R = static_cast<Eigen::Index>(cfg.rank);
  const double t_norm = frob_norm(t);

  if (t_norm == 0.0) {
    result.factors = CpFactors::with_unit_weights(Matrix::Zero(static_cast<Eigen::Index>(I), R),
                                                  Matrix::Zero(static_cast<Eigen::Index>(J), R),
                                                  Matrix::Zero(static_cast<Eigen::Index>(K), R));
    result.trace.records.push_back({1, 0.0, 0.0, cfg.rank, ms_since(t0), {}});
    result.trace.stop_reason = "zero_tensor";
    result.iterations = 1;
    return result;
  }

  CpFactors f;
  if (init) {
    check_compatible(t, *init);
    if (init->rank() != cfg.rank) {
      throw std::invalid_argument("ALS init rank does not match the configured rank");
    }
    f = *init;
    f.X = f.X * f.alpha.asDiagonal();
    f.alpha = Vector::Ones(R);
  } else {
    Pcg32 rng(cfg.seed);
    f = random_factors(rng, t.dims(), cfg.rank);
  }

  result.trace.stop_reason = "max_iters";
  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    f.X = solve_gram_system(kernels::parallel::mttkrp(t, f.X, f.Y, f.Z, 1), khatri_rao_gram(f.Z, f.Y));
    f.Y = solve_gram_system(kernels::parallel::mttkrp(t, f.X, f.Y, f.Z, 2), khatri_rao_gram(f.Z, f.X));
    f.Z = solve_gram_system(kernels::parallel::mttkrp(t, f.X, f.Y, f.Z, 3), khatri_rao_gram(f.Y, f.X));
    balance_columns(f.X, f.Y, f.Z);

    const double err = std::sqrt(kernels::parallel::residual_norm_sq(t, f)) / t_norm;
    result.trace.records.push_back({it, err, 0.0, cfg.rank, ms_since(t0), {}});
    result.rel_error = err;
    result.iterations = it;
    if (!std::isfinite(err)) throw NumericalError("ALS produced a non-finite error");
    if (err < cfg.tol) {
      result.trace.stop_reason = "tol";
      break;
    }
  }
  result.factors = std::move(f);
  return result;
}

}  // namespace cpsdre
