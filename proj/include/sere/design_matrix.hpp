#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>

namespace sere {

/// Ridge design matrix A = ridge*I + sum phi phi^T with its inverse kept current by
/// Sherman-Morrison rank-one updates. Every `reinversion_period` updates the inverse is
/// recomputed from A to stop round-off from accumulating.
template <typename Scalar>
class DesignMatrix {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  DesignMatrix() = default;
  DesignMatrix(Eigen::Index dim, Scalar ridge, std::uint64_t reinversion_period = 500)
      : ridge_(ridge), period_(reinversion_period) {
    if (dim <= 0) throw std::invalid_argument("design matrix dimension must be positive");
    if (!(ridge > Scalar(0))) throw std::invalid_argument("ridge must be positive");
    a_ = Matrix::Identity(dim, dim) * ridge;
    inv_ = Matrix::Identity(dim, dim) / ridge;
  }

  Eigen::Index dim() const { return a_.rows(); }
  Scalar ridge() const { return ridge_; }
  std::uint64_t updates() const { return updates_; }
  const Matrix& matrix() const { return a_; }
  const Matrix& inverse() const { return inv_; }

  template <typename Derived>
  void add(const Eigen::MatrixBase<Derived>& phi) {
    if (phi.size() != a_.rows()) throw std::invalid_argument("design matrix update has wrong dimension");
    a_.noalias() += phi * phi.transpose();
    Vector v = inv_ * phi;
    const Scalar denom = Scalar(1) + phi.dot(v);
    inv_.noalias() -= (v * v.transpose()) / denom;
    ++updates_;
    if (period_ > 0 && updates_ % period_ == 0) reinvert();
  }

  void reinvert() { inv_ = a_.ldlt().solve(Matrix::Identity(a_.rows(), a_.cols())); }

  /// phi^T A^{-1} phi, clamped at zero against round-off.
  template <typename Derived>
  Scalar quad_form(const Eigen::MatrixBase<Derived>& phi) const {
    const Scalar q = phi.dot(inv_ * phi);
    return q > Scalar(0) ? q : Scalar(0);
  }

  /// max |A * A^{-1} - I|.
  Scalar inverse_residual() const {
    return (a_ * inv_ - Matrix::Identity(a_.rows(), a_.cols())).cwiseAbs().maxCoeff();
  }

 private:
  Matrix a_;
  Matrix inv_;
  Scalar ridge_{1};
  std::uint64_t period_ = 500;
  std::uint64_t updates_ = 0;
};

}  // namespace sere
