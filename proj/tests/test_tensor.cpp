#include "cpsdre/rng.hpp"
#include "cpsdre/tensor.hpp"
#include "cpsdre/tensor_io.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

using namespace cpsdre;
using namespace cpsdre::testing;

namespace {

/// Tensor with entry (i,j,k) = 1 + i + 2j + 4k, values 1..8.
Tensor3 one_to_eight() {
  Tensor3 t(2, 2, 2);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j)
      for (std::size_t k = 0; k < 2; ++k) t(i, j, k) = 1.0 + static_cast<double>(i + 2 * j + 4 * k);
  return t;
}

/// Unfolding built entry by entry from the documented column maps.
Matrix loop_unfold(const Tensor3& t, int mode) {
  const std::size_t I = t.dim1(), J = t.dim2(), K = t.dim3();
  const Eigen::Index rows = static_cast<Eigen::Index>(t.dim(mode));
  Matrix m(rows, static_cast<Eigen::Index>(t.size()) / rows);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t k = 0; k < K; ++k) {
        std::size_t r = 0, c = 0;
        if (mode == 1) { r = i; c = j + J * k; }
        if (mode == 2) { r = j; c = i + I * k; }
        if (mode == 3) { r = k; c = i + I * j; }
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = t(i, j, k);
      }
  return m;
}

Matrix loop_khatri_rao(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.cols(); ++r)
    for (Eigen::Index p = 0; p < a.rows(); ++p)
      for (Eigen::Index q = 0; q < b.rows(); ++q) out(p * b.rows() + q, r) = a(p, r) * b(q, r);
  return out;
}

CpFactors random_cp(Pcg32& rng, std::size_t I, std::size_t J, std::size_t K, std::size_t R) {
  CpFactors f = random_factors(rng, {I, J, K}, R);
  for (Eigen::Index r = 0; r < f.alpha.size(); ++r) f.alpha(r) = rng.uniform(0.5, 2.0);
  return f;
}

}  // namespace

TEST_CASE("layout: element (i,j,k) lives at i + I*(j + J*k)") {
  Tensor3 t(3, 4, 5);
  t(2, 1, 3) = 7.0;
  CHECK(t.data()[2 + 3 * (1 + 4 * 3)] == 7.0);
  CHECK(t.size() == 60);
}

TEST_CASE("constructors reject bad shapes and non-finite data") {
  CHECK_THROWS_AS(Tensor3(0, 2, 2), std::invalid_argument);
  CHECK_THROWS_AS(Tensor3(2, 2, 2, std::vector<double>(7, 0.0)), std::invalid_argument);
  std::vector<double> bad(8, 0.0);
  bad[3] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(Tensor3(2, 2, 2, bad), std::invalid_argument);
  bad[3] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(Tensor3(2, 2, 2, bad), std::invalid_argument);
}

TEST_CASE("unfold of the 1..8 tensor") {
  const Tensor3 t = one_to_eight();
  Matrix expected1(2, 4);
  expected1 << 1, 3, 5, 7, 2, 4, 6, 8;
  CHECK(unfold(t, 1) == expected1);
  for (int mode = 1; mode <= 3; ++mode) CHECK(unfold(t, mode) == loop_unfold(t, mode));
  CHECK_THROWS_AS(unfold(t, 0), std::invalid_argument);
  CHECK_THROWS_AS(unfold(t, 4), std::invalid_argument);
}

TEST_CASE("unfolding preserves the Frobenius norm") {
  Pcg32 rng(11);
  const Tensor3 t = random_tensor(rng, 7, 6, 5);
  const double n = frob_norm(t);
  for (int mode = 1; mode <= 3; ++mode) {
    CHECK(std::abs(unfold(t, mode).norm() - n) <= 1e-14 * n);
  }
}

TEST_CASE("1x1x1 tensor unfolds to a 1x1 matrix in every mode") {
  const Tensor3 t(1, 1, 1, {3.25});
  for (int mode = 1; mode <= 3; ++mode) {
    const Matrix m = unfold(t, mode);
    REQUIRE(m.rows() == 1);
    REQUIRE(m.cols() == 1);
    CHECK(m(0, 0) == 3.25);
  }
}

TEST_CASE("fold inverts unfold") {
  const Tensor3 t = one_to_eight();
  Matrix m(2, 4);
  m << 1, 3, 5, 7, 2, 4, 6, 8;
  CHECK(fold(m, 1, {2, 2, 2}) == t);

  Pcg32 rng(5);
  for (auto dims : {std::array<std::size_t, 3>{7, 6, 5}, {1, 4, 3}, {5, 1, 1}, {2, 3, 7}}) {
    const Tensor3 r = random_tensor(rng, dims[0], dims[1], dims[2]);
    for (int mode = 1; mode <= 3; ++mode) CHECK(fold(unfold(r, mode), mode, dims) == r);
  }
  CHECK_THROWS_AS(fold(Matrix::Zero(3, 3), 1, {2, 2, 2}), std::invalid_argument);
  CHECK_THROWS_AS(fold(Matrix::Zero(2, 4), 2, {2, 3, 2}), std::invalid_argument);
}

TEST_CASE("khatri_rao examples") {
  Matrix a(2, 1), b(2, 1);
  a << 1, 2;
  b << 3, 4;
  Matrix expected(4, 1);
  expected << 3, 4, 6, 8;
  CHECK(khatri_rao(a, b) == expected);

  const Matrix kr = khatri_rao(Matrix::Identity(2, 2), Matrix::Identity(2, 2));
  Matrix id(4, 2);
  id << 1, 0, 0, 0, 0, 0, 0, 1;
  CHECK(kr == id);

  Pcg32 rng(3);
  const Matrix ra = random_uniform_matrix(rng, 3, 2), rb = random_uniform_matrix(rng, 4, 2);
  CHECK(rel_diff(khatri_rao(ra, rb), loop_khatri_rao(ra, rb)) <= 1e-15);
  CHECK_THROWS_AS(khatri_rao(ra, random_uniform_matrix(rng, 4, 3)), std::invalid_argument);
}

TEST_CASE("reconstruct examples") {
  CpFactors f;
  f.X = Matrix(2, 1);
  f.X << 1, 0;
  f.Y = Matrix(2, 1);
  f.Y << 1, 1;
  f.Z = Matrix::Ones(1, 1);
  f.alpha = Vector::Constant(1, 2.0);
  const Tensor3 t = reconstruct(f);
  REQUIRE(t.dims() == std::array<std::size_t, 3>{2, 2, 1});
  CHECK(t(0, 0, 0) == 2.0);
  CHECK(t(0, 1, 0) == 2.0);
  CHECK(t(1, 0, 0) == 0.0);
  CHECK(t(1, 1, 0) == 0.0);

  Pcg32 rng(9);
  CpFactors g = random_cp(rng, 4, 3, 5, 3);
  const Tensor3 oracle = loop_reconstruct(g);
  CHECK(max_abs_diff(reconstruct(g), oracle) <= 1e-12 * frob_norm(oracle));

  g.alpha.setZero();
  CHECK(frob_norm(reconstruct(g)) == 0.0);
}

TEST_CASE("matricized CP identities") {
  Pcg32 rng(17);
  for (auto dims : {std::array<std::size_t, 3>{7, 6, 5}, {3, 4, 2}, {1, 5, 3}}) {
    const CpFactors f = random_cp(rng, dims[0], dims[1], dims[2], 4);
    const Tensor3 t = reconstruct(f);
    const Matrix D = f.alpha.asDiagonal();
    CHECK(rel_diff(unfold(t, 1), f.X * D * khatri_rao(f.Z, f.Y).transpose()) <= 1e-12);
    CHECK(rel_diff(unfold(t, 2), f.Y * D * khatri_rao(f.Z, f.X).transpose()) <= 1e-12);
    CHECK(rel_diff(unfold(t, 3), f.Z * D * khatri_rao(f.Y, f.X).transpose()) <= 1e-12);
  }
}

TEST_CASE("relative_error") {
  Pcg32 rng(23);
  const CpFactors f = random_cp(rng, 4, 5, 3, 2);
  const Tensor3 t = reconstruct(f);
  CHECK(relative_error(t, f) <= 1e-15);

  Tensor3 e(2, 2, 2);
  e(0, 0, 0) = 1.0;
  CpFactors zero{Matrix::Zero(2, 1), Matrix::Zero(2, 1), Matrix::Zero(2, 1), Vector::Ones(1)};
  CHECK(relative_error(e, zero) == doctest::Approx(1.0).epsilon(1e-15));

  // Entrywise oracle on a random tensor.
  const Tensor3 r = random_tensor(rng, 4, 5, 3);
  const Tensor3 model = loop_reconstruct(f);
  double num = 0.0, den = 0.0;
  for (std::size_t n = 0; n < r.size(); ++n) {
    num += (r.data()[n] - model.data()[n]) * (r.data()[n] - model.data()[n]);
    den += r.data()[n] * r.data()[n];
  }
  CHECK(relative_error(r, f) == doctest::Approx(std::sqrt(num / den)).epsilon(1e-12));

  // Zero tensor: absolute error.
  const Tensor3 z(4, 5, 3);
  CHECK(relative_error(z, f) == doctest::Approx(frob_norm(model)).epsilon(1e-12));

  CHECK_THROWS_AS(relative_error(Tensor3(3, 5, 3), f), std::invalid_argument);
}

TEST_CASE("column rescaling leaves the reconstruction unchanged") {
  Pcg32 rng(29);
  const CpFactors f = random_cp(rng, 5, 4, 6, 3);
  CpFactors g = f;
  const double c[3] = {3.0, -0.25, 7.5};
  g.X.col(0) *= c[0];
  g.alpha(0) /= c[0];
  g.Y.col(1) *= c[1];
  g.alpha(1) /= c[1];
  g.Z.col(2) *= c[2];
  g.alpha(2) /= c[2];
  const Tensor3 a = reconstruct(f), b = reconstruct(g);
  CHECK(max_abs_diff(a, b) <= 1e-12 * frob_norm(a));
}

TEST_CASE("CpFactors validation") {
  CpFactors f{Matrix::Zero(2, 2), Matrix::Zero(3, 2), Matrix::Zero(4, 1), Vector::Ones(2)};
  CHECK_THROWS_AS(f.validate(), std::invalid_argument);
  f.Z = Matrix::Zero(4, 2);
  CHECK_NOTHROW(f.validate());
  f.alpha = Vector::Ones(3);
  CHECK_THROWS_AS(f.validate(), std::invalid_argument);
}

TEST_CASE("T3B round trip and exact byte count") {
  Pcg32 rng(31);
  const Tensor3 t = random_tensor(rng, 3, 4, 5);
  std::stringstream ss;
  write_t3b(ss, t);
  const std::string bytes = ss.str();
  CHECK(bytes.size() == 8 + 24 + 3 * 4 * 5 * 8);
  CHECK(bytes.substr(0, 8) == "T3BINARY");
  // Dims are little-endian u64.
  CHECK(static_cast<unsigned char>(bytes[8]) == 3);
  CHECK(static_cast<unsigned char>(bytes[16]) == 4);
  CHECK(static_cast<unsigned char>(bytes[24]) == 5);
  std::stringstream in(bytes);
  CHECK(read_t3b(in) == t);
}

TEST_CASE("T3B reader rejects malformed input") {
  const Tensor3 t(2, 2, 2);
  std::stringstream ss;
  write_t3b(ss, t);
  const std::string good = ss.str();

  std::string bad_magic = good;
  bad_magic[0] = 'X';
  std::stringstream a(bad_magic);
  CHECK_THROWS(read_t3b(a));

  std::stringstream b(good.substr(0, good.size() - 3));
  CHECK_THROWS(read_t3b(b));

  std::stringstream c(good + "extra");
  CHECK_THROWS(read_t3b(c));

  CHECK_THROWS(read_t3b(std::filesystem::path("/nonexistent/dir/file.t3b")));
}

TEST_CASE("PCG32 is reproducible and uniform draws stay in range") {
  Pcg32 a(42), b(42), c(43);
  bool differs = false;
  for (int n = 0; n < 100; ++n) {
    const double x = a.uniform(-1.0, 1.0);
    CHECK(x == b.uniform(-1.0, 1.0));
    CHECK(x >= -1.0);
    CHECK(x < 1.0);
    differs = differs || x != c.uniform(-1.0, 1.0);
  }
  CHECK(differs);
}
