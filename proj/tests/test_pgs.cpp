#include "cpsdre/cp_solvers.hpp"
#include "cpsdre/rng.hpp"
#include "test_util.hpp"

#include <doctest.h>

using namespace cpsdre;
using namespace cpsdre::testing;

TEST_CASE("PGS finds rank 3 on the synthetic tensor") {
  const Tensor3 t = synthetic_rank3();
  PgsConfig cfg;
  cfg.rank_upper = 10;
  const PgsResult r = pgs(t, cfg);
  CHECK(r.rank_estimate == 3);
  CHECK(r.rel_error < 1e-4);
  CHECK(r.factors.rank() == 10);
  // Brute-force count of surviving weights.
  const double top = r.factors.alpha.cwiseAbs().maxCoeff();
  int survivors = 0;
  for (Eigen::Index n = 0; n < r.factors.alpha.size(); ++n) {
    if (std::abs(r.factors.alpha(n)) > cfg.zero_threshold * top) ++survivors;
  }
  CHECK(survivors == 3);
  CHECK(relative_error(t, r.factors) == doctest::Approx(r.rel_error).epsilon(1e-9));
  // Columns are returned with unit norm.
  for (Eigen::Index n = 0; n < 10; ++n) {
    if (r.factors.alpha(n) == 0.0) continue;
    CHECK(r.factors.X.col(n).norm() == doctest::Approx(1.0));
    CHECK(r.factors.Y.col(n).norm() == doctest::Approx(1.0));
    CHECK(r.factors.Z.col(n).norm() == doctest::Approx(1.0));
  }
}

TEST_CASE("PGS with a numeric lambda also finds rank 3") {
  PgsConfig cfg;
  cfg.lambda = 1e-3;
  const PgsResult r = pgs(synthetic_rank3(), cfg);
  CHECK(r.rank_estimate == 3);
  CHECK(r.rel_error < 1e-4);
}

TEST_CASE("PGS on the zero tensor reports rank 0 with a warning") {
  const PgsResult r = pgs(Tensor3(4, 4, 4), PgsConfig{});
  CHECK(r.rank_estimate == 0);
  CHECK_FALSE(r.trace.warnings.empty());
}

TEST_CASE("PGS rank does not grow with a larger lambda") {
  const Tensor3 t = synthetic_rank3();
  PgsConfig cfg;
  cfg.max_iters = 300;
  std::size_t prev = 1000;
  for (double lambda : {1e-2, 1e-1, 1.0}) {
    CAPTURE(lambda);
    cfg.lambda = lambda;
    const std::size_t low = pgs(t, cfg).rank_estimate;
    cfg.lambda = 10.0 * lambda;
    const std::size_t high = pgs(t, cfg).rank_estimate;
    CHECK(high <= low);
    CHECK(low <= prev);
    prev = low;
  }
}

TEST_CASE("PGS rejects an upper rank beyond the unfolding bound") {
  PgsConfig cfg;
  cfg.rank_upper = 10;
  CHECK_THROWS_AS(pgs(Tensor3(2, 2, 2), cfg), std::invalid_argument);
  cfg.zero_threshold = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("PGS is deterministic under a fixed seed") {
  PgsConfig cfg;
  cfg.max_iters = 50;
  const Tensor3 t = synthetic_rank3(9);
  const PgsResult a = pgs(t, cfg), b = pgs(t, cfg);
  CHECK(a.factors.alpha == b.factors.alpha);
  CHECK(a.factors.X == b.factors.X);
}

TEST_CASE("PGS+ALSk shapes and error") {
  const Tensor3 t = synthetic_rank3();
  PgsConfig pc;
  AlsConfig ac;
  const PgsResult p = pgs(t, pc);
  REQUIRE(p.rank_estimate == 3);

  const PgsAlskResult one = pgs_alsk(t, 1, p, pc.zero_threshold, ac);
  CHECK(one.als.factors.rank() == 3);
  CHECK(one.als.rel_error <= p.rel_error);

  const PgsAlskResult two = pgs_alsk(t, 2, p, pc.zero_threshold, ac);
  CHECK(two.als.factors.X.cols() == 4);
  CHECK(two.als.factors.Y.cols() == 4);
  CHECK(two.als.factors.Z.cols() == 4);

  // The overload that runs PGS itself agrees with the reuse path.
  const PgsAlskResult fresh = pgs_alsk(t, 1, pc, ac);
  CHECK(fresh.als.factors.X == one.als.factors.X);
  CHECK_THROWS_AS(pgs_alsk(t, 0, pc, ac), std::invalid_argument);
}

TEST_CASE("count_significant and truncate_factors") {
  Vector a(5);
  a << 1.0, 0.0, -3.0, 1e-9, 0.5;
  CHECK(count_significant(a, 1e-6) == 3);
  CHECK(count_significant(Vector::Zero(3), 1e-6) == 0);
  Pcg32 rng(3);
  CpFactors f = random_factors(rng, {3, 3, 3}, 5);
  f.alpha = a;
  const CpFactors g = truncate_factors(f, 1e-6);
  REQUIRE(g.rank() == 3);
  CHECK(g.alpha(0) == -3.0);
  CHECK(g.alpha(1) == 1.0);
  CHECK(g.alpha(2) == 0.5);
  CHECK(g.X.col(0) == f.X.col(2));
}
