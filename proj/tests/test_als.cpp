#include "cpsdre/cp_solvers.hpp"
#include "cpsdre/rng.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <sstream>

using namespace cpsdre;
using namespace cpsdre::testing;

TEST_CASE("ALS recovers the synthetic rank-3 tensor") {
  const Tensor3 t = synthetic_rank3();
  AlsConfig cfg;
  cfg.rank = 3;
  cfg.max_iters = 500;
  const AlsResult r = als(t, cfg);
  CHECK(r.rel_error < 1e-6);
  CHECK(r.iterations <= 500);
  CHECK(r.trace.stop_reason == "tol");
  CHECK(r.trace.records.size() == r.iterations);
  CHECK(relative_error(t, r.factors) == doctest::Approx(r.rel_error).epsilon(1e-6));
  CHECK(r.factors.alpha == Vector::Ones(3));
}

TEST_CASE("ALS is exact on a rank-1 tensor") {
  Pcg32 rng(77);
  const Tensor3 t = reconstruct(random_factors(rng, {6, 5, 4}, 1));
  AlsConfig cfg;
  cfg.rank = 1;
  cfg.tol = 1e-12;
  const AlsResult r = als(t, cfg);
  CHECK(r.rel_error < 1e-10);
}

TEST_CASE("ALS on the zero tensor stops at iteration 1") {
  AlsConfig cfg;
  cfg.rank = 2;
  const AlsResult r = als(Tensor3(3, 4, 5), cfg);
  CHECK(r.iterations == 1);
  CHECK(r.rel_error == 0.0);
  CHECK(frob_norm(reconstruct(r.factors)) == 0.0);
}

TEST_CASE("ALS error never increases across a full sweep") {
  Pcg32 rng(5);
  const Tensor3 t = random_tensor(rng, 8, 7, 6);
  AlsConfig cfg;
  cfg.rank = 4;
  cfg.max_iters = 60;
  cfg.tol = 1e-14;
  const AlsResult r = als(t, cfg);
  REQUIRE(r.trace.records.size() == 60);
  for (std::size_t n = 1; n < r.trace.records.size(); ++n) {
    const double prev = r.trace.records[n - 1].rel_error, cur = r.trace.records[n].rel_error;
    CHECK(cur * cur <= prev * prev + 1e-10);
  }
}

TEST_CASE("ALS rejects a rank above the unfolding bound and bad settings") {
  AlsConfig cfg;
  cfg.rank = 5;
  CHECK_THROWS_AS(als(Tensor3(2, 2, 3), cfg), std::invalid_argument);
  cfg.rank = 0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.rank = 1;
  cfg.tol = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("ALS is deterministic under a fixed seed") {
  Pcg32 rng(8);
  const Tensor3 t = random_tensor(rng, 5, 5, 5);
  AlsConfig cfg;
  cfg.rank = 2;
  cfg.max_iters = 20;
  const AlsResult a = als(t, cfg), b = als(t, cfg);
  CHECK(a.factors.X == b.factors.X);
  CHECK(a.rel_error == b.rel_error);
}

TEST_CASE("als_ls_update recovers consistent factors") {
  Pcg32 rng(13);
  const Matrix kr = khatri_rao(random_uniform_matrix(rng, 5, 3), random_uniform_matrix(rng, 4, 3));
  const Matrix X = random_uniform_matrix(rng, 6, 3);
  CHECK(rel_diff(als_ls_update(X * kr.transpose(), kr), X) <= 1e-12);
}

TEST_CASE("als_ls_update matches the pseudoinverse oracle") {
  Pcg32 rng(19);
  const Matrix kr = random_uniform_matrix(rng, 30, 4);
  const Matrix U = random_uniform_matrix(rng, 7, 30);
  const Matrix pinv = kr.completeOrthogonalDecomposition().pseudoInverse();
  CHECK(rel_diff(als_ls_update(U, kr), U * pinv.transpose()) <= 1e-12);
}

TEST_CASE("als_ls_update with duplicate columns stays finite") {
  Pcg32 rng(21);
  Matrix kr = random_uniform_matrix(rng, 12, 3);
  kr.col(2) = kr.col(0);
  const Matrix U = random_uniform_matrix(rng, 4, 12);
  const Matrix F = als_ls_update(U, kr);
  CHECK(F.allFinite());
  // The regularized solution still reproduces the projection of U onto span(kr).
  const Matrix pinv = kr.completeOrthogonalDecomposition().pseudoInverse();
  CHECK(rel_diff(F * kr.transpose(), U * pinv.transpose() * kr.transpose()) <= 1e-6);
  CHECK_THROWS_AS(als_ls_update(U, random_uniform_matrix(rng, 11, 3)), std::invalid_argument);
}

TEST_CASE("Khatri-Rao Gram equals the Hadamard product of factor Grams") {
  Pcg32 rng(4);
  const Matrix a = random_uniform_matrix(rng, 5, 3), b = random_uniform_matrix(rng, 6, 3);
  const Matrix kr = khatri_rao(a, b);
  CHECK(rel_diff(khatri_rao_gram(a, b), kr.transpose() * kr) <= 1e-13);
}

TEST_CASE("trace CSV has the documented columns") {
  AlsConfig cfg;
  cfg.rank = 1;
  cfg.max_iters = 3;
  Pcg32 rng(2);
  const AlsResult r = als(random_tensor(rng, 3, 3, 3), cfg);
  std::ostringstream os;
  r.trace.write_csv(os);
  const std::string csv = os.str();
  CHECK(csv.rfind("iter,rel_error,lambda,nnz_alpha,wall_ms\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + static_cast<long>(r.trace.records.size()));
}
