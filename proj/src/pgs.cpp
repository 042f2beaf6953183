#include "cpsdre/cp_solvers.hpp"
#include "cpsdre/errors.hpp"
#include "cpsdre/kernels.hpp"
#include "cpsdre/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace cpsdre {

namespace {

using Clock = std::chrono::steady_clock;
using Index = Eigen::Index;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Inner relaxation rounds of the hybrid weight step per outer iteration.
constexpr int kHybridRounds = 20;
// Proximal polishing steps after the hybrid rounds.
constexpr int kPolishSteps = 10;
// Direction sweeps allowed when testing whether a smaller support can be
// refit to the tolerance.
constexpr int kRefitSweeps = 100;

std::vector<Index> support_of(const Vector& alpha) {
  std::vector<Index> s;
  for (Index r = 0; r < alpha.size(); ++r) {
    if (alpha(r) != 0.0) s.push_back(r);
  }
  return s;
}

void prune(Vector& alpha, double threshold) {
  const double amax = alpha.cwiseAbs().maxCoeff();
  if (amax == 0.0) return;
  for (Index r = 0; r < alpha.size(); ++r) {
    if (std::abs(alpha(r)) <= threshold * amax) alpha(r) = 0.0;
  }
}

Matrix select_cols(const Matrix& m, const std::vector<Index>& cols) {
  Matrix out(m.rows(), static_cast<Index>(cols.size()));
  for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Index>(c)) = m.col(cols[c]);
  return out;
}

struct SupportFit {
  Vector weights;  // on the support, in support order
  double rel_error = 1.0;
};

// Least-squares weights restricted to `support` and the resulting relative
// error, evaluated from the normal equations.
SupportFit support_fit(const NormalEquations& ne, const std::vector<Index>& support) {
  SupportFit fit;
  const auto n = static_cast<Index>(support.size());
  if (n == 0 || ne.t_norm_sq == 0.0) {
    fit.weights = Vector::Zero(n);
    fit.rel_error = ne.t_norm_sq == 0.0 ? 0.0 : 1.0;
    return fit;
  }
  Matrix G(n, n);
  Vector c(n);
  for (Index a = 0; a < n; ++a) {
    c(a) = ne.qt(support[static_cast<std::size_t>(a)]);
    for (Index b = 0; b < n; ++b) {
      G(a, b) = ne.gram(support[static_cast<std::size_t>(a)], support[static_cast<std::size_t>(b)]);
    }
  }
  fit.weights = solve_gram_system(c.transpose(), G).transpose();
  const double explained = c.dot(fit.weights);
  fit.rel_error = std::sqrt(std::max(ne.t_norm_sq - explained, 0.0) / ne.t_norm_sq);
  return fit;
}

double model_error(const NormalEquations& ne, const Vector& alpha) {
  if (ne.t_norm_sq == 0.0) return 0.0;
  const double r2 = ne.t_norm_sq - 2.0 * ne.qt.dot(alpha) + alpha.dot(ne.gram * alpha);
  return std::sqrt(std::max(r2, 0.0) / ne.t_norm_sq);
}

// Updates the direction of every active column of factor `mode` with the
// weights held fixed, then renormalizes the columns.
void update_directions(const Tensor3& t, CpFactors& f, const std::vector<Index>& active, int mode) {
  const Matrix Xa = select_cols(f.X, active);
  const Matrix Ya = select_cols(f.Y, active);
  const Matrix Za = select_cols(f.Z, active);
  Vector a(static_cast<Index>(active.size()));
  for (std::size_t n = 0; n < active.size(); ++n) a(static_cast<Index>(n)) = f.alpha(active[n]);

  Matrix gram;
  switch (mode) {
    case 1: gram = khatri_rao_gram(Za, Ya); break;
    case 2: gram = khatri_rao_gram(Za, Xa); break;
    default: gram = khatri_rao_gram(Ya, Xa); break;
  }
  gram = gram.cwiseProduct(a * a.transpose());
  const Matrix rhs = kernels::parallel::mttkrp(t, Xa, Ya, Za, mode) * a.asDiagonal();
  const Matrix W = solve_gram_system(rhs, gram);

  Matrix& target = mode == 1 ? f.X : (mode == 2 ? f.Y : f.Z);
  for (std::size_t n = 0; n < active.size(); ++n) {
    const double nrm = W.col(static_cast<Index>(n)).norm();
    if (nrm > 0.0 && std::isfinite(nrm)) target.col(active[n]) = W.col(static_cast<Index>(n)) / nrm;
  }
}

// Drops column `drop` from the support and refits the remaining directions
// and weights. Returns true (and commits to f and ne) when the smaller
// support reaches `tol`.
bool refit_without(const Tensor3& t, CpFactors& f, NormalEquations& ne, std::vector<Index>& support,
                   std::size_t drop, double tol) {
  CpFactors trial = f;
  std::vector<Index> reduced = support;
  trial.alpha(reduced[drop]) = 0.0;
  reduced.erase(reduced.begin() + static_cast<std::ptrdiff_t>(drop));
  auto assign = [&](const NormalEquations& eq) {
    const SupportFit fit = support_fit(eq, reduced);
    for (std::size_t n = 0; n < reduced.size(); ++n) trial.alpha(reduced[n]) = fit.weights(static_cast<Index>(n));
    return fit.rel_error;
  };
  double err = assign(ne);
  NormalEquations trial_ne = ne;
  for (int sweep = 0; sweep < kRefitSweeps && err > tol; ++sweep) {
    for (int mode = 1; mode <= 3; ++mode) update_directions(t, trial, reduced, mode);
    trial_ne = normal_equations(t, trial.X, trial.Y, trial.Z);
    const double next = assign(trial_ne);
    const bool stalled = next >= err * (1.0 - 1e-6);
    err = next;
    if (stalled) break;
  }
  if (err > tol) return false;
  f = std::move(trial);
  ne = std::move(trial_ne);
  support = std::move(reduced);
  return true;
}

void normalize_columns(CpFactors& f) {
  for (Index r = 0; r < f.X.cols(); ++r) {
    for (Matrix* m : {&f.X, &f.Y, &f.Z}) {
      const double nrm = m->col(r).norm();
      if (nrm > 0.0) {
        m->col(r) /= nrm;
        f.alpha(r) *= nrm;
      }
    }
  }
}

}  // namespace

void PgsConfig::validate() const {
  if (rank_upper < 1) throw std::invalid_argument("PGS rank_upper must be at least 1");
  if (lambda && !(*lambda >= 0.0)) throw std::invalid_argument("PGS lambda must be nonnegative");
  if (!(tol > 0.0)) throw std::invalid_argument("PGS tol must be positive");
  if (max_iters < 1) throw std::invalid_argument("PGS max_iters must be at least 1");
  if (!(zero_threshold >= 0.0)) throw std::invalid_argument("PGS zero_threshold must be nonnegative");
  if (gk_steps > rank_upper) throw std::invalid_argument("PGS gk_steps must not exceed rank_upper");
  if (!(path_decay > 0.0 && path_decay < 1.0)) {
    throw std::invalid_argument("PGS path_decay must lie in (0, 1)");
  }
}

std::size_t count_significant(const Vector& alpha, double threshold) {
  if (alpha.size() == 0) return 0;
  const double amax = alpha.cwiseAbs().maxCoeff();
  if (amax == 0.0) return 0;
  std::size_t n = 0;
  for (Index r = 0; r < alpha.size(); ++r) {
    if (std::abs(alpha(r)) > threshold * amax) ++n;
  }
  return n;
}

CpFactors truncate_factors(const CpFactors& f, double threshold) {
  f.validate();
  const double amax = f.alpha.cwiseAbs().maxCoeff();
  std::vector<Index> keep;
  for (Index r = 0; r < f.alpha.size(); ++r) {
    if (amax > 0.0 && std::abs(f.alpha(r)) > threshold * amax) keep.push_back(r);
  }
  if (keep.empty()) throw std::invalid_argument("truncate_factors: no significant components");
  std::stable_sort(keep.begin(), keep.end(),
                   [&](Index a, Index b) { return std::abs(f.alpha(a)) > std::abs(f.alpha(b)); });
  CpFactors out{select_cols(f.X, keep), select_cols(f.Y, keep), select_cols(f.Z, keep),
                Vector(static_cast<Index>(keep.size()))};
  for (std::size_t n = 0; n < keep.size(); ++n) out.alpha(static_cast<Index>(n)) = f.alpha(keep[n]);
  return out;
}

PgsResult pgs(const Tensor3& t, const PgsConfig& cfg, const std::optional<CpFactors>& init) {
  cfg.validate();
  const std::size_t I = t.dim1(), J = t.dim2(), K = t.dim3();
  const std::size_t bound = std::min({I * J, I * K, J * K});
  if (cfg.rank_upper > bound) {
    throw std::invalid_argument("PGS rank_upper " + std::to_string(cfg.rank_upper) +
                                " exceeds min(IJ, IK, JK) = " + std::to_string(bound));
  }
  const auto R = static_cast<Index>(cfg.rank_upper);
  const std::size_t gk = cfg.gk_steps == 0 ? cfg.rank_upper : cfg.gk_steps;
  const bool auto_lambda = !cfg.lambda.has_value();

  PgsResult result;
  result.trace.solver = auto_lambda ? "pgs(auto)" : "pgs(lambda)";
  const auto t0 = Clock::now();

  CpFactors f;
  if (init) {
    check_compatible(t, *init);
    if (init->rank() != cfg.rank_upper) {
      throw std::invalid_argument("PGS init rank does not match rank_upper");
    }
    f = *init;
  } else {
    Pcg32 rng(cfg.seed);
    f = random_factors(rng, t.dims(), cfg.rank_upper);
    f.alpha = Vector::Ones(R);
  }
  normalize_columns(f);
  if (!init) f.alpha = Vector::Ones(R);

  const double t_norm_sq = frob_norm(t) * frob_norm(t);
  if (t_norm_sq == 0.0) {
    f.alpha.setZero();
    result.factors = std::move(f);
    result.rank_estimate = 0;
    result.trace.warnings.push_back("all-zero alpha: input tensor is zero");
    result.trace.stop_reason = "zero_tensor";
    return result;
  }

  std::optional<double> lam_c;
  double prev_err = -1.0;
  bool reached_tol = false;
  NormalEquations ne;
  result.trace.stop_reason = "max_iters";

  for (std::size_t it = 1; it <= cfg.max_iters; ++it) {
    std::vector<Index> active = support_of(f.alpha);
    if (active.empty()) {
      result.trace.stop_reason = "all_zero";
      break;
    }
    for (int mode = 1; mode <= 3; ++mode) update_directions(t, f, active, mode);

    ne = normal_equations(t, f.X, f.Y, f.Z);
    // The threshold decays geometrically but never exceeds a fraction of the
    // largest correlation, so the l1 step always keeps a component alive.
    const double cap = cfg.path_decay * ne.qt.cwiseAbs().maxCoeff();
    lam_c = lam_c ? std::min(*lam_c * cfg.path_decay, cap) : cap;

    double lambda_used = 0.0;
    if (!auto_lambda) {
      lambda_used = std::max(*cfg.lambda, *lam_c);
      const double step = lipschitz_bound(ne.gram);
      f.alpha = ista_lasso(ne, f.alpha, lambda_used, step);
      prune(f.alpha, cfg.zero_threshold);
    } else {
      lambda_used = *lam_c;
      HybridOptions opts;
      opts.fixed_lambda = lambda_used;
      opts.freeze_zeros = true;
      for (int round = 0; round < kHybridRounds; ++round) {
        const Vector before = f.alpha;
        // Components that were pruned come back when they violate the
        // optimality condition of the l1 problem at the current threshold.
        const Vector grad = ne.qt - ne.gram * f.alpha;
        for (Index r = 0; r < R; ++r) {
          if (f.alpha(r) == 0.0 && std::abs(grad(r)) > lambda_used && ne.gram(r, r) > 0.0) {
            const double mag = std::abs(grad(r)) - lambda_used;
            f.alpha(r) = std::copysign(mag, grad(r)) / ne.gram(r, r);
          }
        }
        f.alpha = flexible_hybrid_alpha_update(ne, f.alpha, gk, opts).alpha;
        prune(f.alpha, cfg.zero_threshold);
        if ((f.alpha - before).norm() <= 1e-10 * f.alpha.norm()) break;
      }
      const double step = lipschitz_bound(ne.gram);
      if (step > 0.0) {
        for (int p = 0; p < kPolishSteps; ++p) f.alpha = ista_alpha_update(ne, f.alpha, lambda_used, step);
      }
      prune(f.alpha, cfg.zero_threshold);
    }

    const std::vector<Index> support = support_of(f.alpha);
    const SupportFit fit = support_fit(ne, support);
    const double err = model_error(ne, f.alpha);
    result.trace.records.push_back({it, err, lambda_used, support.size(), ms_since(t0), f.alpha});
    result.iterations = it;

    if (!support.empty() && fit.rel_error <= cfg.tol) {
      reached_tol = true;
      result.trace.stop_reason = "tol";
      break;
    }
    if (!auto_lambda && *lam_c <= *cfg.lambda && prev_err >= 0.0 &&
        std::abs(err - prev_err) <= 1e-10 * std::max(err, 1e-300)) {
      result.trace.stop_reason = "stalled";
      break;
    }
    prev_err = err;
  }

  // Final weights: optionally the smallest support that still meets tol,
  // then a refit on the support.
  std::vector<Index> support = support_of(f.alpha);
  if (!support.empty()) {
    if (reached_tol && cfg.trim_support) {
      while (support.size() > 1) {
        std::vector<std::pair<double, std::size_t>> candidates;
        for (std::size_t p = 0; p < support.size(); ++p) {
          std::vector<Index> reduced = support;
          reduced.erase(reduced.begin() + static_cast<std::ptrdiff_t>(p));
          candidates.emplace_back(support_fit(ne, reduced).rel_error, p);
        }
        std::stable_sort(candidates.begin(), candidates.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        if (candidates.front().first <= cfg.tol) {
          const std::size_t drop = candidates.front().second;
          f.alpha(support[drop]) = 0.0;
          support.erase(support.begin() + static_cast<std::ptrdiff_t>(drop));
          continue;
        }
        // With frozen directions no smaller support meets tol; one is still
        // accepted when refitting its directions recovers tol.
        bool trimmed = false;
        for (const auto& cand : candidates) {
          if (refit_without(t, f, ne, support, cand.second, cfg.tol)) {
            trimmed = true;
            break;
          }
        }
        if (!trimmed) break;
      }
    }
    if (auto_lambda) {
      HybridOptions opts;
      opts.freeze_zeros = true;
      f.alpha = flexible_hybrid_alpha_update(ne, f.alpha, gk, opts).alpha;
    } else {
      const SupportFit fit = support_fit(ne, support);
      for (std::size_t n = 0; n < support.size(); ++n) f.alpha(support[n]) = fit.weights(static_cast<Index>(n));
    }
    prune(f.alpha, cfg.zero_threshold);
  }

  result.rank_estimate = count_significant(f.alpha, cfg.zero_threshold);
  if (result.rank_estimate == 0) result.trace.warnings.push_back("all-zero alpha: no component survived");
  result.rel_error = relative_error(t, f);
  result.factors = std::move(f);
  return result;
}

PgsAlskResult pgs_alsk(const Tensor3& t, std::size_t k, const PgsConfig& pgs_cfg,
                       const AlsConfig& als_cfg) {
  if (k < 1) throw std::invalid_argument("pgs_alsk: k must be at least 1");
  return pgs_alsk(t, k, pgs(t, pgs_cfg), pgs_cfg.zero_threshold, als_cfg);
}

PgsAlskResult pgs_alsk(const Tensor3& t, std::size_t k, PgsResult pgs_result, double zero_threshold,
                       const AlsConfig& als_cfg) {
  if (k < 1) throw std::invalid_argument("pgs_alsk: k must be at least 1");
  PgsAlskResult out;
  out.pgs = std::move(pgs_result);
  if (out.pgs.rank_estimate == 0) {
    throw NumericalError("pgs_alsk: PGS found no surviving component");
  }
  const CpFactors kept = truncate_factors(out.pgs.factors, zero_threshold);
  const auto R = static_cast<Index>(kept.rank());
  const Index target = R + static_cast<Index>(k) - 1;

  Pcg32 rng(als_cfg.seed);
  CpFactors init = random_factors(rng, t.dims(), static_cast<std::size_t>(target));
  init.X.leftCols(R) = kept.X * kept.alpha.asDiagonal();
  init.Y.leftCols(R) = kept.Y;
  init.Z.leftCols(R) = kept.Z;

  AlsConfig cfg = als_cfg;
  cfg.rank = static_cast<std::size_t>(target);
  out.als = als(t, cfg, init);
  out.als.trace.solver = "pgs+als" + std::to_string(k);
  return out;
}

}  // namespace cpsdre
