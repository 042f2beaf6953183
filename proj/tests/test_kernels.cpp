#include "cpsdre/kernels.hpp"
#include "cpsdre/rng.hpp"
#include "test_util.hpp"

#include <doctest.h>

using namespace cpsdre;
using namespace cpsdre::testing;

namespace {

struct Fixture {
  Tensor3 t;
  CpFactors f;
};

Fixture make_fixture(std::uint64_t seed, std::size_t I, std::size_t J, std::size_t K, std::size_t R) {
  Pcg32 rng(seed);
  Fixture fx{random_tensor(rng, I, J, K), random_factors(rng, {I, J, K}, R)};
  for (Eigen::Index r = 0; r < fx.f.alpha.size(); ++r) fx.f.alpha(r) = rng.uniform(-2.0, 2.0);
  return fx;
}

/// Restores the thread budget when a test leaves.
struct ThreadGuard {
  int saved = kernels::num_threads();
  ~ThreadGuard() { kernels::set_num_threads(saved); }
};

}  // namespace

TEST_CASE("serial mttkrp equals unfolding times Khatri-Rao product") {
  const Fixture fx = make_fixture(1, 6, 5, 4, 3);
  const auto& f = fx.f;
  CHECK(rel_diff(kernels::serial::mttkrp(fx.t, f.X, f.Y, f.Z, 1), unfold(fx.t, 1) * khatri_rao(f.Z, f.Y)) <= 1e-13);
  CHECK(rel_diff(kernels::serial::mttkrp(fx.t, f.X, f.Y, f.Z, 2), unfold(fx.t, 2) * khatri_rao(f.Z, f.X)) <= 1e-13);
  CHECK(rel_diff(kernels::serial::mttkrp(fx.t, f.X, f.Y, f.Z, 3), unfold(fx.t, 3) * khatri_rao(f.Y, f.X)) <= 1e-13);
  CHECK_THROWS_AS(kernels::serial::mttkrp(fx.t, f.X, f.Y, f.Z, 4), std::invalid_argument);
}

TEST_CASE("serial reconstruct, residual and rank-one inner products match loop oracles") {
  const Fixture fx = make_fixture(2, 5, 4, 6, 3);
  const Tensor3 oracle = loop_reconstruct(fx.f);
  CHECK(max_abs_diff(kernels::serial::reconstruct(fx.f), oracle) <= 1e-13);

  double res = 0.0;
  for (std::size_t n = 0; n < oracle.size(); ++n) {
    const double d = fx.t.data()[n] - oracle.data()[n];
    res += d * d;
  }
  CHECK(kernels::serial::residual_norm_sq(fx.t, fx.f) == doctest::Approx(res).epsilon(1e-12));

  const Vector c = kernels::serial::rank_one_inner(fx.t, fx.f.X, fx.f.Y, fx.f.Z);
  for (Eigen::Index r = 0; r < 3; ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < 5; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        for (std::size_t k = 0; k < 6; ++k)
          s += fx.t(i, j, k) * fx.f.X(static_cast<Eigen::Index>(i), r) * fx.f.Y(static_cast<Eigen::Index>(j), r) *
               fx.f.Z(static_cast<Eigen::Index>(k), r);
    CHECK(c(r) == doctest::Approx(s).epsilon(1e-12));
  }
}

TEST_CASE("parallel kernels match the serial reference and do not depend on the thread count") {
  ThreadGuard guard;
  const Fixture fx = make_fixture(3, 13, 11, 9, 4);
  const auto& f = fx.f;
  kernels::set_num_threads(1);
  std::vector<Matrix> m1;
  for (int mode = 1; mode <= 3; ++mode) m1.push_back(kernels::parallel::mttkrp(fx.t, f.X, f.Y, f.Z, mode));
  const Tensor3 rec1 = kernels::parallel::reconstruct(f);
  const double res1 = kernels::parallel::residual_norm_sq(fx.t, f);
  const Vector inner1 = kernels::parallel::rank_one_inner(fx.t, f.X, f.Y, f.Z);

  // Each output entry is owned by one thread and summed in a fixed order, so
  // every thread count reproduces the single-thread bits.
  for (int threads : {1, 2, 3, 4, 7}) {
    CAPTURE(threads);
    kernels::set_num_threads(threads);
    for (int mode = 1; mode <= 3; ++mode) {
      CHECK(kernels::parallel::mttkrp(fx.t, f.X, f.Y, f.Z, mode) == m1[static_cast<std::size_t>(mode - 1)]);
    }
    CHECK(kernels::parallel::reconstruct(f) == rec1);
    CHECK(kernels::parallel::residual_norm_sq(fx.t, f) == res1);
    CHECK(kernels::parallel::rank_one_inner(fx.t, f.X, f.Y, f.Z) == inner1);
  }

  // The serial loops sum in a different order, so agreement is to rounding.
  for (int mode = 1; mode <= 3; ++mode) {
    CHECK(rel_diff(m1[static_cast<std::size_t>(mode - 1)], kernels::serial::mttkrp(fx.t, f.X, f.Y, f.Z, mode)) <= 1e-12);
  }
  CHECK(max_abs_diff(rec1, kernels::serial::reconstruct(f)) <= 1e-12 * max_abs_diff(rec1, Tensor3(13, 11, 9)));
  CHECK(res1 == doctest::Approx(kernels::serial::residual_norm_sq(fx.t, f)).epsilon(1e-12));
  CHECK(rel_diff(inner1, kernels::serial::rank_one_inner(fx.t, f.X, f.Y, f.Z)) <= 1e-12);
}

TEST_CASE("kernels handle degenerate shapes") {
  const Fixture fx = make_fixture(4, 1, 1, 1, 1);
  CHECK(kernels::parallel::reconstruct(fx.f) == loop_reconstruct(fx.f));
  const Fixture thin = make_fixture(5, 1, 7, 1, 2);
  for (int mode = 1; mode <= 3; ++mode) {
    CHECK(rel_diff(kernels::parallel::mttkrp(thin.t, thin.f.X, thin.f.Y, thin.f.Z, mode),
                   kernels::serial::mttkrp(thin.t, thin.f.X, thin.f.Y, thin.f.Z, mode)) <= 1e-12);
  }
}
