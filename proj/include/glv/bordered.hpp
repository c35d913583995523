#pragma once

#include <Eigen/SparseCholesky>

#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "glv/glop.hpp"
#include "glv/linalg.hpp"

namespace glv {

/// Sparse Cholesky factor of W (J(psi) + shift).
///
/// J >= -1 under the weighted real inner product (the kinetic part is positive
/// semidefinite and the pointwise part is bounded below by |psi|^2 - 1), so any
/// shift > 1 gives a positive definite matrix.
class ShiftedJacobianFactor {
 public:
  ShiftedJacobianFactor(const OrderField& psi, const LinkField& links, double shift)
      : grid_(psi.grid()), shift_(shift), weights_(realified_weights(psi.grid())),
        llt_(std::make_shared<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>>()) {
    llt_->compute(assemble_weighted_jacobian(psi, links, shift));
    if (llt_->info() != Eigen::Success) {
      throw std::runtime_error("ShiftedJacobianFactor: factorization failed (shift too small?)");
    }
  }

  /// out = (J + shift)^{-1} r on the field block.
  void solve(const Vector& r, Vector& out) const {
    out = llt_->solve((weights_.array() * r.array()).matrix());
  }

  double shift() const { return shift_; }
  const Grid& grid() const { return grid_; }

 private:
  Grid grid_;
  double shift_;
  Vector weights_;
  std::shared_ptr<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>> llt_;
};

/// Coefficients g of the phase functional: Im <psi0, phi> = g . phi (plain dot, realified).
inline Vector phase_row(const OrderField& psi0) {
  const Grid& grid = psi0.grid();
  Vector g(2 * static_cast<Eigen::Index>(grid.size()));
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double w = grid.weight(k);
    g(2 * k) = -w * psi0[k].imag();
    g(2 * k + 1) = w * psi0[k].real();
  }
  return g;
}

/// The column -i psi multiplying the multiplier eta, realified.
inline Vector phase_column(const OrderField& psi) { return to_vector(times_i(psi) *= -1.0); }

/// Jacobian J(psi) - i eta bordered by k columns B, k rows G and a k x k corner D.
struct BorderedJacobian {
  OrderField psi;
  LinkField links;
  double eta = 0.0;
  std::vector<Vector> columns;
  std::vector<Vector> rows;
  Matrix corner;

  int borders() const { return static_cast<int>(columns.size()); }
  Eigen::Index field_dim() const { return static_cast<Eigen::Index>(psi.real_size()); }

  void apply(const Vector& x, Vector& y) const {
    const Eigen::Index n = field_dim();
    const int k = borders();
    OrderField phi = to_field(x, psi.grid());
    OrderField jphi = apply_jacobian(psi, phi, links);
    if (eta != 0.0) jphi.axpy(Complex(0.0, -eta), phi);
    y.resize(n + k);
    y.head(n) = Eigen::Map<const Vector>(jphi.real_data(), n);
    for (int l = 0; l < k; ++l) y.head(n) += x(n + l) * columns[l];
    for (int l = 0; l < k; ++l) {
      double s = rows[l].dot(x.head(n));
      for (int m = 0; m < k; ++m) s += corner(l, m) * x(n + m);
      y(n + l) = s;
    }
  }

  LinearOperator op() const {
    LinearOperator o;
    o.weights = realified_weights(psi.grid(), borders());
    o.symmetric = false;
    o.apply = [this](const Vector& x, Vector& y) { apply(x, y); };
    return o;
  }

  /// Exact inverse of [[J + c, B], [G^T, D]] via the k x k Schur complement.
  Preconditioner preconditioner(std::shared_ptr<const ShiftedJacobianFactor> factor) const {
    const Eigen::Index n = field_dim();
    const int k = borders();
    auto pb = std::make_shared<std::vector<Vector>>(k);
    Matrix schur = corner;
    for (int l = 0; l < k; ++l) {
      factor->solve(columns[l], (*pb)[l]);
    }
    for (int l = 0; l < k; ++l) {
      for (int m = 0; m < k; ++m) schur(l, m) -= rows[l].dot((*pb)[m]);
    }
    auto lu = std::make_shared<Eigen::FullPivLU<Matrix>>(schur);
    auto rows_copy = std::make_shared<std::vector<Vector>>(rows);
    return [factor, pb, lu, rows_copy, n, k](const Vector& r, Vector& out) {
      Vector y0;
      factor->solve(r.head(n), y0);
      out.resize(n + k);
      if (k == 0) {
        out = y0;
        return;
      }
      Vector rhs(k);
      for (int l = 0; l < k; ++l) rhs(l) = r(n + l) - (*rows_copy)[l].dot(y0);
      const Vector xi = lu->isInvertible() ? Vector(lu->solve(rhs)) : Vector::Zero(k);
      for (int l = 0; l < k; ++l) y0 -= xi(l) * (*pb)[l];
      out.head(n) = y0;
      out.tail(k) = xi;
    };
  }
};

/// Shift used for the Cholesky-based preconditioner and the shift-invert eigensolver.
inline constexpr double kDefaultJacobianShift = 1.1;

}  // namespace glv
