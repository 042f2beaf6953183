#include "cpsdre/tensor.hpp"

#include "cpsdre/kernels.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace cpsdre {

namespace {

void check_mode(int mode) {
  if (mode < 1 || mode > 3) {
    throw std::invalid_argument("tensor mode must be 1, 2 or 3, got " + std::to_string(mode));
  }
}

}  // namespace

Tensor3::Tensor3(std::size_t I, std::size_t J, std::size_t K) : dims_{I, J, K} {
  if (I == 0 || J == 0 || K == 0) {
    throw std::invalid_argument("Tensor3 dimensions must be positive");
  }
  data_.assign(I * J * K, 0.0);
}

Tensor3::Tensor3(std::size_t I, std::size_t J, std::size_t K, std::vector<double> data)
    : dims_{I, J, K}, data_(std::move(data)) {
  if (I == 0 || J == 0 || K == 0) {
    throw std::invalid_argument("Tensor3 dimensions must be positive");
  }
  if (data_.size() != I * J * K) {
    throw std::invalid_argument("Tensor3 data length " + std::to_string(data_.size()) +
                                " does not match I*J*K = " + std::to_string(I * J * K));
  }
  check_finite();
}

std::size_t Tensor3::dim(int mode) const {
  check_mode(mode);
  return dims_[static_cast<std::size_t>(mode - 1)];
}

void Tensor3::check_finite() const {
  for (std::size_t n = 0; n < data_.size(); ++n) {
    if (!std::isfinite(data_[n])) {
      throw std::invalid_argument("Tensor3 entry at linear index " + std::to_string(n) +
                                  " is not finite");
    }
  }
}

void CpFactors::validate() const {
  const auto R = X.cols();
  if (R < 1) throw std::invalid_argument("CpFactors rank must be at least 1");
  if (Y.cols() != R || Z.cols() != R) {
    throw std::invalid_argument("CpFactors factor matrices must share a column count");
  }
  if (alpha.size() != R) {
    throw std::invalid_argument("CpFactors alpha length must equal the rank");
  }
}

CpFactors CpFactors::with_unit_weights(Matrix X, Matrix Y, Matrix Z) {
  CpFactors f{std::move(X), std::move(Y), std::move(Z), Vector()};
  f.alpha = Vector::Ones(f.X.cols());
  f.validate();
  return f;
}

Matrix unfold(const Tensor3& t, int mode) {
  check_mode(mode);
  const std::size_t I = t.dim1(), J = t.dim2(), K = t.dim3();
  if (mode == 1) return Matrix(t.mode1_view());
  Matrix m(mode == 2 ? J : K, mode == 2 ? I * K : I * J);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t j = 0; j < J; ++j) {
      for (std::size_t i = 0; i < I; ++i) {
        if (mode == 2) {
          m(j, i + I * k) = t(i, j, k);
        } else {
          m(k, i + I * j) = t(i, j, k);
        }
      }
    }
  }
  return m;
}

Tensor3 fold(const Matrix& m, int mode, const std::array<std::size_t, 3>& dims) {
  check_mode(mode);
  const auto [I, J, K] = dims;
  const std::size_t rows = dims[static_cast<std::size_t>(mode - 1)];
  const std::size_t cols = I * J * K / (rows == 0 ? 1 : rows);
  if (rows == 0 || static_cast<std::size_t>(m.rows()) != rows ||
      static_cast<std::size_t>(m.cols()) != cols) {
    throw std::invalid_argument("fold: matrix shape does not match the mode-" +
                                std::to_string(mode) + " unfolding of the requested dims");
  }
  Tensor3 t(I, J, K);
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t j = 0; j < J; ++j) {
      for (std::size_t i = 0; i < I; ++i) {
        switch (mode) {
          case 1: t(i, j, k) = m(i, j + J * k); break;
          case 2: t(i, j, k) = m(j, i + I * k); break;
          default: t(i, j, k) = m(k, i + I * j); break;
        }
      }
    }
  }
  t.check_finite();
  return t;
}

Matrix khatri_rao(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw std::invalid_argument("khatri_rao: column counts differ");
  }
  Matrix out(a.rows() * b.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.cols(); ++r) {
    for (Eigen::Index p = 0; p < a.rows(); ++p) {
      out.col(r).segment(p * b.rows(), b.rows()) = a(p, r) * b.col(r);
    }
  }
  return out;
}

Tensor3 reconstruct(const CpFactors& f) { return kernels::parallel::reconstruct(f); }

double frob_norm(const Tensor3& t) {
  return Eigen::Map<const Vector>(t.data(), static_cast<Eigen::Index>(t.size())).norm();
}

void check_compatible(const Tensor3& t, const CpFactors& f) {
  f.validate();
  if (static_cast<std::size_t>(f.X.rows()) != t.dim1() ||
      static_cast<std::size_t>(f.Y.rows()) != t.dim2() ||
      static_cast<std::size_t>(f.Z.rows()) != t.dim3()) {
    throw std::invalid_argument("CP factor row counts do not match the tensor dimensions");
  }
}

double relative_error(const Tensor3& t, const CpFactors& f) {
  check_compatible(t, f);
  const double res = std::sqrt(kernels::parallel::residual_norm_sq(t, f));
  const double nt = frob_norm(t);
  return nt > 0.0 ? res / nt : res;
}

}  // namespace cpsdre
