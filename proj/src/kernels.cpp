#include "cpsdre/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace cpsdre::kernels {

namespace {

using Index = Eigen::Index;

void check_factors(const Tensor3& t, const Matrix& X, const Matrix& Y, const Matrix& Z) {
  if (X.cols() != Y.cols() || X.cols() != Z.cols()) {
    throw std::invalid_argument("factor matrices must share a column count");
  }
  if (static_cast<std::size_t>(X.rows()) != t.dim1() ||
      static_cast<std::size_t>(Y.rows()) != t.dim2() ||
      static_cast<std::size_t>(Z.rows()) != t.dim3()) {
    throw std::invalid_argument("factor row counts do not match the tensor dimensions");
  }
}

void check_mode(int mode) {
  if (mode < 1 || mode > 3) throw std::invalid_argument("mttkrp mode must be 1, 2 or 3");
}

// Row block handled by one thread in the mode-1 kernel.
constexpr Index kRowBlock = 32;

}  // namespace

namespace serial {

Matrix mttkrp(const Tensor3& t, const Matrix& X, const Matrix& Y, const Matrix& Z, int mode) {
  check_mode(mode);
  check_factors(t, X, Y, Z);
  const Index I = X.rows(), J = Y.rows(), K = Z.rows(), R = X.cols();
  Matrix M = Matrix::Zero(mode == 1 ? I : (mode == 2 ? J : K), R);
  for (Index k = 0; k < K; ++k) {
    for (Index j = 0; j < J; ++j) {
      for (Index i = 0; i < I; ++i) {
        const double v = t(i, j, k);
        for (Index r = 0; r < R; ++r) {
          switch (mode) {
            case 1: M(i, r) += v * (Y(j, r) * Z(k, r)); break;
            case 2: M(j, r) += v * (X(i, r) * Z(k, r)); break;
            default: M(k, r) += v * (X(i, r) * Y(j, r)); break;
          }
        }
      }
    }
  }
  return M;
}

Tensor3 reconstruct(const CpFactors& f) {
  f.validate();
  const Index I = f.X.rows(), J = f.Y.rows(), K = f.Z.rows(), R = f.X.cols();
  Tensor3 t(I, J, K);
  for (Index k = 0; k < K; ++k) {
    for (Index j = 0; j < J; ++j) {
      for (Index i = 0; i < I; ++i) {
        double s = 0.0;
        for (Index r = 0; r < R; ++r) s += f.alpha(r) * f.X(i, r) * f.Y(j, r) * f.Z(k, r);
        t(i, j, k) = s;
      }
    }
  }
  return t;
}

double residual_norm_sq(const Tensor3& t, const CpFactors& f) {
  check_factors(t, f.X, f.Y, f.Z);
  f.validate();
  const Index I = f.X.rows(), J = f.Y.rows(), K = f.Z.rows(), R = f.X.cols();
  double acc = 0.0;
  for (Index k = 0; k < K; ++k) {
    for (Index j = 0; j < J; ++j) {
      for (Index i = 0; i < I; ++i) {
        double s = 0.0;
        for (Index r = 0; r < R; ++r) s += f.alpha(r) * f.X(i, r) * f.Y(j, r) * f.Z(k, r);
        const double d = t(i, j, k) - s;
        acc += d * d;
      }
    }
  }
  return acc;
}

Vector rank_one_inner(const Tensor3& t, const Matrix& X, const Matrix& Y, const Matrix& Z) {
  check_factors(t, X, Y, Z);
  const Index I = X.rows(), J = Y.rows(), K = Z.rows(), R = X.cols();
  Vector c = Vector::Zero(R);
  for (Index k = 0; k < K; ++k) {
    for (Index j = 0; j < J; ++j) {
      for (Index i = 0; i < I; ++i) {
        for (Index r = 0; r < R; ++r) c(r) += t(i, j, k) * X(i, r) * Y(j, r) * Z(k, r);
      }
    }
  }
  return c;
}

}  // namespace serial

namespace parallel {

Matrix mttkrp(const Tensor3& t, const Matrix& X, const Matrix& Y, const Matrix& Z, int mode) {
  check_mode(mode);
  check_factors(t, X, Y, Z);
  const Index I = X.rows(), J = Y.rows(), K = Z.rows(), R = X.cols();
  const double* data = t.data();

  if (mode == 1) {
    // Each thread owns a block of rows and sweeps all fibers, accumulating in
    // the same (k, j) order as the serial reference.
    Matrix M = Matrix::Zero(I, R);
    const Index blocks = (I + kRowBlock - 1) / kRowBlock;
#pragma omp parallel for schedule(static)
    for (Index b = 0; b < blocks; ++b) {
      const Index i0 = b * kRowBlock;
      const Index i1 = std::min(I, i0 + kRowBlock);
      std::vector<double> w(static_cast<std::size_t>(R));
      for (Index k = 0; k < K; ++k) {
        for (Index j = 0; j < J; ++j) {
          const double* fiber = data + I * (j + J * k);
          for (Index r = 0; r < R; ++r) w[static_cast<std::size_t>(r)] = Y(j, r) * Z(k, r);
          for (Index r = 0; r < R; ++r) {
            const double wr = w[static_cast<std::size_t>(r)];
            double* out = M.col(r).data();
            for (Index i = i0; i < i1; ++i) out[i] += fiber[i] * wr;
          }
        }
      }
    }
    return M;
  }

  if (mode == 2) {
    Matrix M = Matrix::Zero(J, R);
#pragma omp parallel for schedule(static)
    for (Index j = 0; j < J; ++j) {
      Vector s(R);
      for (Index k = 0; k < K; ++k) {
        Eigen::Map<const Vector> fiber(data + I * (j + J * k), I);
        s.noalias() = X.transpose() * fiber;
        for (Index r = 0; r < R; ++r) M(j, r) += s(r) * Z(k, r);
      }
    }
    return M;
  }

  Matrix M = Matrix::Zero(K, R);
#pragma omp parallel for schedule(static)
  for (Index k = 0; k < K; ++k) {
    Vector s(R);
    for (Index j = 0; j < J; ++j) {
      Eigen::Map<const Vector> fiber(data + I * (j + J * k), I);
      s.noalias() = X.transpose() * fiber;
      for (Index r = 0; r < R; ++r) M(k, r) += s(r) * Y(j, r);
    }
  }
  return M;
}

Tensor3 reconstruct(const CpFactors& f) {
  f.validate();
  const Index I = f.X.rows(), J = f.Y.rows(), K = f.Z.rows(), R = f.X.cols();
  Tensor3 t(I, J, K);
  double* data = t.data();
  const Index JK = J * K;
#pragma omp parallel for schedule(static)
  for (Index jk = 0; jk < JK; ++jk) {
    const Index j = jk % J, k = jk / J;
    Vector w(R);
    for (Index r = 0; r < R; ++r) w(r) = f.alpha(r) * f.Y(j, r) * f.Z(k, r);
    Eigen::Map<Vector> fiber(data + I * jk, I);
    fiber.noalias() = f.X * w;
  }
  return t;
}

double residual_norm_sq(const Tensor3& t, const CpFactors& f) {
  check_factors(t, f.X, f.Y, f.Z);
  f.validate();
  const Index I = f.X.rows(), J = f.Y.rows(), K = f.Z.rows(), R = f.X.cols();
  const double* data = t.data();
  // One partial sum per frontal slice, each computed by a single thread and
  // combined serially afterwards.
  std::vector<double> partial(static_cast<std::size_t>(K), 0.0);
#pragma omp parallel for schedule(static)
  for (Index k = 0; k < K; ++k) {
    Vector w(R);
    Vector diff(I);
    double acc = 0.0;
    for (Index j = 0; j < J; ++j) {
      for (Index r = 0; r < R; ++r) w(r) = f.alpha(r) * f.Y(j, r) * f.Z(k, r);
      Eigen::Map<const Vector> fiber(data + I * (j + J * k), I);
      diff.noalias() = fiber - f.X * w;
      acc += diff.squaredNorm();
    }
    partial[static_cast<std::size_t>(k)] = acc;
  }
  double total = 0.0;
  for (double p : partial) total += p;
  return total;
}

Vector rank_one_inner(const Tensor3& t, const Matrix& X, const Matrix& Y, const Matrix& Z) {
  const Matrix M = mttkrp(t, X, Y, Z, 1);
  return X.cwiseProduct(M).colwise().sum().transpose();
}

}  // namespace parallel

void set_num_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

int num_threads() { return omp_get_max_threads(); }

}  // namespace cpsdre::kernels
