#pragma once

/// \file kernels.hpp
/// Hot tensor kernels in two flavours. `serial` holds the straightforward
/// loop implementations kept as the testing reference; `parallel` holds the
/// OpenMP versions used by the solvers. Every parallel kernel assigns each
/// output entry to exactly one thread and reduces partial sums in a fixed
/// order, so results do not depend on the thread count.

#include "cpsdre/tensor.hpp"

namespace cpsdre::kernels {

namespace serial {

/// Matricized tensor times Khatri-Rao product for `mode`:
/// mode 1 -> T(1)(Z kr Y), mode 2 -> T(2)(Z kr X), mode 3 -> T(3)(Y kr X).
Matrix mttkrp(const Tensor3& t, const Matrix& X, const Matrix& Y, const Matrix& Z, int mode);

/// Dense tensor of a CP model.
Tensor3 reconstruct(const CpFactors& f);

/// ||t - reconstruct(f)||_F^2 without forming the model tensor.
double residual_norm_sq(const Tensor3& t, const CpFactors& f);

/// c_r = <t, x_r o y_r o z_r> for every column r.
Vector rank_one_inner(const Tensor3& t, const Matrix& X, const Matrix& Y, const Matrix& Z);

}  // namespace serial

namespace parallel {

Matrix mttkrp(const Tensor3& t, const Matrix& X, const Matrix& Y, const Matrix& Z, int mode);
Tensor3 reconstruct(const CpFactors& f);
double residual_norm_sq(const Tensor3& t, const CpFactors& f);
Vector rank_one_inner(const Tensor3& t, const Matrix& X, const Matrix& Y, const Matrix& Z);

}  // namespace parallel

/// Sets the OpenMP thread count used by the parallel kernels (0 keeps the
/// runtime default).
void set_num_threads(int n);

/// Current OpenMP thread budget.
int num_threads();

}  // namespace cpsdre::kernels
