#pragma once

/// \file cp_solvers.hpp
/// CP decomposition by alternating least squares and by the sparsity
/// promoting proximal gradient scheme (PGS), plus the alpha-step building
/// blocks: soft thresholding, ISTA and the flexible hybrid Golub-Kahan update.

#include "cpsdre/tensor.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace cpsdre {

/// Settings for ALS.
struct AlsConfig {
  std::size_t rank = 1;
  /// Stop once the relative error drops below this value.
  double tol = 1e-8;
  std::size_t max_iters = 500;
  std::uint64_t seed = 42;

  void validate() const;
};

/// Settings for PGS.
struct PgsConfig {
  /// Upper bound on the rank; the number of columns carried by the solver.
  std::size_t rank_upper = 10;
  /// Absolute l1 weight on alpha. Empty selects the flexible hybrid update
  /// with GCV parameter choice ("auto").
  std::optional<double> lambda;
  /// Target relative error of the support-restricted least-squares fit.
  double tol = 1e-6;
  std::size_t max_iters = 1000;
  /// Weights with |alpha_r| <= zero_threshold * max|alpha| count as zero.
  double zero_threshold = 1e-6;
  /// Golub-Kahan steps for the hybrid update; 0 selects rank_upper.
  std::size_t gk_steps = 0;
  std::uint64_t seed = 42;
  /// Geometric decay of the continuation threshold per outer iteration.
  double path_decay = 0.9;
  /// Drop components while the refit error stays within tol once it is met.
  bool trim_support = true;

  void validate() const;
};

/// One completed solver iteration.
struct TraceRecord {
  std::size_t iter = 0;
  double rel_error = 0.0;
  double lambda = 0.0;
  std::size_t nnz_alpha = 0;
  double wall_ms = 0.0;
  /// Weight vector after the iteration (PGS only).
  Vector alpha;
};

/// Per-iteration solver history.
struct SolveTrace {
  std::string solver;
  std::vector<TraceRecord> records;
  std::vector<std::string> warnings;
  std::string stop_reason;

  /// CSV with columns iter, rel_error, lambda, nnz_alpha, wall_ms.
  void write_csv(std::ostream& os) const;
};

struct AlsResult {
  CpFactors factors;
  SolveTrace trace;
  double rel_error = 0.0;
  std::size_t iterations = 0;
};

struct PgsResult {
  /// All rank_upper columns; zero weights mark discarded components.
  CpFactors factors;
  std::size_t rank_estimate = 0;
  SolveTrace trace;
  double rel_error = 0.0;
  std::size_t iterations = 0;
};

struct PgsAlskResult {
  PgsResult pgs;
  AlsResult als;
};

/// Gram matrix of khatri_rao(a, b), computed as (a'a) .* (b'b).
Matrix khatri_rao_gram(const Matrix& a, const Matrix& b);

/// Solves F * gram = rhs for F. Falls back to gram + delta*I with
/// delta = 1e-12 * trace(gram) / R when gram is numerically singular.
Matrix solve_gram_system(const Matrix& rhs, const Matrix& gram);

/// argmin_F ||unfolding - F kr'||_F through the Gram system
/// F (kr' kr) = unfolding kr.
Matrix als_ls_update(const Matrix& unfolding, const Matrix& kr);

/// ALS with Gauss-Seidel factor order and all-ones weights.
AlsResult als(const Tensor3& t, const AlsConfig& cfg,
              const std::optional<CpFactors>& init = std::nullopt);

/// Componentwise sign(z) * max(|z| - tau, 0).
Vector soft_threshold(const Vector& z, double tau);

/// Data of the weight subproblem min_a 1/2 ||Q'a - t||^2 in normal-equation
/// form: gram = QQ', qt = Qt and t_norm_sq = ||t||^2.
struct NormalEquations {
  Matrix gram;
  Vector qt;
  double t_norm_sq = 0.0;
};

/// Normal equations of an explicit Q (R rows, one per rank-one term).
NormalEquations normal_equations(const Vector& t_vec, const Matrix& q);

/// Normal equations of the CP weight problem, computed from factor
/// contractions without materializing Q.
NormalEquations normal_equations(const Tensor3& t, const Matrix& X, const Matrix& Y,
                                 const Matrix& Z);

/// Largest eigenvalue of a symmetric positive semidefinite matrix by
/// `iters` power iterations from the all-ones start.
double lipschitz_bound(const Matrix& gram, int iters = 20);

/// One ISTA step for min 1/2 ||t - Q'a||^2 + lambda ||a||_1:
/// soft_threshold(alpha - grad/step, lambda/step). Without a step the
/// Lipschitz bound ||QQ'||_2 is used.
Vector ista_alpha_update(const Vector& t_vec, const Matrix& q, const Vector& alpha, double lambda,
                         std::optional<double> step = std::nullopt);
Vector ista_alpha_update(const NormalEquations& ne, const Vector& alpha, double lambda, double step);

/// ISTA iterated until the update stalls (relative change <= rel_tol).
Vector ista_lasso(const NormalEquations& ne, Vector alpha, double lambda, double step,
                  std::size_t max_iters = 5000, double rel_tol = 1e-14);

/// Golub-Kahan bidiagonalization A V = U M started from b.
struct BidiagState {
  /// (k+1) x k lower bidiagonal.
  Matrix M;
  /// Orthonormal left basis, k+1 columns (the last one is zero after a
  /// breakdown in the left recurrence).
  Matrix U;
  /// Orthonormal right basis, k columns.
  Matrix V;
  /// Solution-space basis L^{-1} V.
  Matrix Zk;
  double beta1 = 0.0;
  std::size_t steps = 0;
  bool breakdown = false;
};

/// Runs up to `steps` bidiagonalization steps with full reorthogonalization.
/// Stops early when a bidiagonal entry falls below 1e-14 relative to ||A||_F.
BidiagState golub_kahan(const Matrix& A, const Vector& b, std::size_t steps);

struct HybridOptions {
  /// Use this lambda instead of the GCV choice.
  std::optional<double> fixed_lambda;
  /// Reweighting floor in L = diag((|alpha| + eps_w)^{-1/2}).
  double eps_w = 1e-10;
  /// GCV grid: grid_points log-spaced values in [grid_min, grid_max] * beta1.
  double grid_min = 1e-8;
  double grid_max = 1e2;
  int grid_points = 30;
  /// Keep exactly-zero weights at zero (their column is removed from the
  /// preconditioned operator).
  bool freeze_zeros = false;
};

struct HybridResult {
  Vector alpha;
  double lambda = 0.0;
  BidiagState state;
};

/// Flexible hybrid update: min ||Q'a - t||^2 + lambda ||L a||^2 solved on the
/// Golub-Kahan subspace of the preconditioned operator Q'L^{-1}, with lambda
/// chosen by projected GCV unless fixed.
HybridResult flexible_hybrid_alpha_update(const Vector& t_vec, const Matrix& q, const Vector& alpha,
                                          std::size_t gk_steps, const HybridOptions& opts = {});

/// Same update on normal-equation data. The problem is first compressed to an
/// equivalent (R+1)-row least-squares problem, so the cost is independent of
/// the tensor size.
HybridResult flexible_hybrid_alpha_update(const NormalEquations& ne, const Vector& alpha,
                                          std::size_t gk_steps, const HybridOptions& opts = {});

/// Sparse CP with continuation on the l1 threshold; see README for details.
PgsResult pgs(const Tensor3& t, const PgsConfig& cfg,
              const std::optional<CpFactors>& init = std::nullopt);

/// PGS to find R, then ALS at rank R + k - 1 started from the surviving
/// PGS columns (weights folded into X) padded with random columns.
PgsAlskResult pgs_alsk(const Tensor3& t, std::size_t k, const PgsConfig& pgs_cfg,
                       const AlsConfig& als_cfg);

/// Same, continuing from an existing PGS result on t.
PgsAlskResult pgs_alsk(const Tensor3& t, std::size_t k, PgsResult pgs_result, double zero_threshold,
                       const AlsConfig& als_cfg);

/// Number of weights with |alpha_r| > threshold * max|alpha|.
std::size_t count_significant(const Vector& alpha, double threshold);

/// Factors restricted to the significant columns, ordered by decreasing |alpha|.
CpFactors truncate_factors(const CpFactors& f, double threshold);

}  // namespace cpsdre
