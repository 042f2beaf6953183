#pragma once

/// \file tensor.hpp
/// Dense third-order tensors, matricization, Khatri-Rao products and CP
/// reconstruction.

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <vector>

namespace cpsdre {

/// Column-major dense matrix used throughout the library.
using Matrix = Eigen::MatrixXd;
/// Dense real vector.
using Vector = Eigen::VectorXd;

/// Dense I x J x K tensor. Element (i,j,k) lives at linear index
/// i + I*(j + J*k), so mode-1 fibers are contiguous and the mode-1
/// unfolding is a plain reinterpretation of the storage.
class Tensor3 {
public:
  Tensor3() = default;

  /// Zero tensor of the given shape. All dimensions must be positive.
  Tensor3(std::size_t I, std::size_t J, std::size_t K);

  /// Tensor over existing data in linearization order. Rejects a length
  /// mismatch and non-finite entries.
  Tensor3(std::size_t I, std::size_t J, std::size_t K, std::vector<double> data);

  std::size_t dim1() const { return dims_[0]; }
  std::size_t dim2() const { return dims_[1]; }
  std::size_t dim3() const { return dims_[2]; }
  /// Dimension of mode 1, 2 or 3.
  std::size_t dim(int mode) const;
  const std::array<std::size_t, 3>& dims() const { return dims_; }
  std::size_t size() const { return data_.size(); }

  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[i + dims_[0] * (j + dims_[1] * k)];
  }
  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data_[i + dims_[0] * (j + dims_[1] * k)];
  }

  const double* data() const { return data_.data(); }
  double* data() { return data_.data(); }
  const std::vector<double>& values() const { return data_; }

  /// Copy-free view of the mode-1 unfolding (I x JK).
  Eigen::Map<const Matrix> mode1_view() const {
    return {data_.data(), static_cast<Eigen::Index>(dims_[0]),
            static_cast<Eigen::Index>(dims_[1] * dims_[2])};
  }

  /// Frontal slice k as an I x J matrix view.
  Eigen::Map<const Matrix> frontal_slice(std::size_t k) const {
    return {data_.data() + dims_[0] * dims_[1] * k, static_cast<Eigen::Index>(dims_[0]),
            static_cast<Eigen::Index>(dims_[1])};
  }

  /// Throws if any entry is NaN or infinite.
  void check_finite() const;

  bool operator==(const Tensor3& other) const = default;

private:
  std::array<std::size_t, 3> dims_{0, 0, 0};
  std::vector<double> data_;
};

/// CP model sum_r alpha_r x_r o y_r o z_r.
struct CpFactors {
  Matrix X;
  Matrix Y;
  Matrix Z;
  Vector alpha;

  std::size_t rank() const { return static_cast<std::size_t>(X.cols()); }

  /// Throws std::invalid_argument unless the factors share a column count
  /// R >= 1 and alpha has length R.
  void validate() const;

  /// Factors with all-ones weights.
  static CpFactors with_unit_weights(Matrix X, Matrix Y, Matrix Z);
};

/// Mode-n unfolding. Remaining indices form the column index in increasing
/// mode order: mode 1 -> j + J*k, mode 2 -> i + I*k, mode 3 -> i + I*j.
Matrix unfold(const Tensor3& t, int mode);

/// Inverse of unfold for the given dims.
Tensor3 fold(const Matrix& m, int mode, const std::array<std::size_t, 3>& dims);

/// Column-wise Kronecker product: column r is kron(a(:,r), b(:,r)).
Matrix khatri_rao(const Matrix& a, const Matrix& b);

/// Full tensor of a CP model.
Tensor3 reconstruct(const CpFactors& f);

/// Frobenius norm of a tensor.
double frob_norm(const Tensor3& t);

/// ||t - reconstruct(f)||_F / ||t||_F, or the absolute error when t = 0.
double relative_error(const Tensor3& t, const CpFactors& f);

/// Checks that factor row counts match the tensor dimensions.
void check_compatible(const Tensor3& t, const CpFactors& f);

}  // namespace cpsdre
