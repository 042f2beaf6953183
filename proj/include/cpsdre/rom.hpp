#pragma once

/// \file rom.hpp
/// Orthonormal projection basis from CP factors and the Galerkin reduced
/// state-dependent model A_red(w) = P' A(P w) P, B_red = P' B.

#include "cpsdre/tensor.hpp"

#include <filesystem>
#include <functional>
#include <string>

namespace cpsdre {

/// Where a reduced basis came from.
struct Provenance {
  std::string solver;
  std::size_t rank_estimate = 0;
  /// FNV-1a hash of the factor bytes, hex encoded.
  std::string factor_hash;
};

struct ReducedModel {
  /// nx x r with orthonormal columns.
  Matrix P;
  std::size_t r = 0;
  Provenance source;
  /// Leading singular values of X diag(alpha) Y'.
  Vector singular_values;
};

/// State-dependent system matrix A(v).
using StateMatrixFn = std::function<Matrix(const Vector&)>;

struct ReducedOperators {
  StateMatrixFn A_red;
  Matrix B_red;
};

/// Leading r left singular vectors of X diag(alpha) Y', each column signed so
/// that its largest-magnitude entry is positive. Throws when
/// sigma_r / sigma_1 < 1e-13.
ReducedModel projection_basis(const CpFactors& f, std::size_t r);

/// Galerkin reduction of v' = A(v) v + B u onto span(P).
ReducedOperators reduce_dynamics(const ReducedModel& rm, StateMatrixFn assemble_A, const Matrix& B);

/// v = P w.
Vector lift(const ReducedModel& rm, const Vector& w);
/// w = P' v.
Vector restrict_state(const ReducedModel& rm, const Vector& v);

/// FNV-1a 64-bit hash of the factor matrices and weights.
std::string factor_hash(const CpFactors& f);

/// Writes `<base>.json` (dims, provenance, singular values) and `<base>.bin`
/// (P as little-endian doubles, column-major).
void write_reduced_model(const std::filesystem::path& base, const ReducedModel& rm);
ReducedModel read_reduced_model(const std::filesystem::path& base);

}  // namespace cpsdre
