#pragma once

#include <Eigen/Sparse>

#include <utility>
#include <vector>

#include "glv/gauge.hpp"
#include "glv/grid.hpp"

namespace glv {

namespace detail {

// Five-point covariant stencil with the doubled-neighbour boundary rows.
// Works for unit links and for their mu-derivatives (backward edges use the conjugate).
inline OrderField covariant_stencil(const OrderField& phi, const LinkField& links, bool with_diagonal) {
  const Grid& grid = phi.grid();
  require_same_grid(grid, links.grid(), "kinetic_apply");
  OrderField out(grid);
  const int hf = grid.half();
  const double inv_h2 = 1.0 / (grid.h() * grid.h());
  const double diag = with_diagonal ? 4.0 : 0.0;
  for (int j = -hf; j <= hf; ++j) {
    for (int i = -hf; i <= hf; ++i) {
      Complex acc = diag * phi(i, j);
      // x direction
      if (i == hf) {
        acc -= 2.0 * std::conj(links.x(i - 1, j)) * phi(i - 1, j);
      } else if (i == -hf) {
        acc -= 2.0 * links.x(i, j) * phi(i + 1, j);
      } else {
        acc -= links.x(i, j) * phi(i + 1, j) + std::conj(links.x(i - 1, j)) * phi(i - 1, j);
      }
      // y direction
      if (j == hf) {
        acc -= 2.0 * std::conj(links.y(i, j - 1)) * phi(i, j - 1);
      } else if (j == -hf) {
        acc -= 2.0 * links.y(i, j) * phi(i, j + 1);
      } else {
        acc -= links.y(i, j) * phi(i, j + 1) + std::conj(links.y(i, j - 1)) * phi(i, j - 1);
      }
      out(i, j) = acc * inv_h2;
    }
  }
  return out;
}

}  // namespace detail

/// Discrete kinetic energy operator (D_xx + D_yy) phi.
inline OrderField kinetic_apply(const OrderField& phi, const LinkField& links) {
  return detail::covariant_stencil(phi, links, true);
}

/// Discrete Ginzburg-Landau residual (D_xx + D_yy) psi - psi (1 - |psi|^2).
inline OrderField residual(const OrderField& psi, const LinkField& links) {
  OrderField out = kinetic_apply(psi, links);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const Complex p = psi[k];
    out[k] -= p * (1.0 - std::norm(p));
  }
  return out;
}

/// Jacobian of the residual at psi applied to phi. Real-linear only (conjugation term).
inline OrderField apply_jacobian(const OrderField& psi, const OrderField& phi, const LinkField& links) {
  require_same_grid(psi.grid(), phi.grid(), "apply_jacobian");
  OrderField out = kinetic_apply(phi, links);
  for (std::size_t k = 0; k < out.size(); ++k) {
    const Complex p = psi[k];
    const Complex f = phi[k];
    out[k] += (2.0 * std::norm(p) - 1.0) * f + p * p * std::conj(f);
  }
  return out;
}

/// Derivative of the residual with respect to the field strength mu.
inline OrderField residual_dmu(const OrderField& psi, double mu) {
  return detail::covariant_stencil(psi, link_field_dmu(psi.grid(), mu), false);
}

struct ReferenceState {
  OrderField psi0;
};

/// Im <psi0, psi>; zero selects one representative of each phase orbit.
inline double phase_condition(const ReferenceState& ref, const OrderField& psi) {
  return inner_complex(ref.psi0, psi).imag();
}

/// Unknowns of the phase-condition-extended system plus the parameter mu.
struct ExtendedState {
  OrderField psi;
  double eta = 0.0;
  double mu = 0.0;
};

struct ExtendedVector {
  OrderField field;
  double scalar = 0.0;
};

inline ExtendedVector residual_extended(const ExtendedState& state, const ReferenceState& ref,
                                        const LinkField& links) {
  ExtendedVector out{residual(state.psi, links), phase_condition(ref, state.psi)};
  out.field.axpy(Complex(0.0, -state.eta), state.psi);
  return out;
}

inline ExtendedVector residual_extended(const ExtendedState& state, const ReferenceState& ref) {
  return residual_extended(state, ref, link_field(state.psi.grid(), state.mu));
}

/// Extended Jacobian applied to (phi, nu): ((J - i eta) phi - i psi nu, Im <psi0, phi>).
inline ExtendedVector apply_jacobian_extended(const ExtendedState& state, const ExtendedVector& dir,
                                              const ReferenceState& ref, const LinkField& links) {
  ExtendedVector out{apply_jacobian(state.psi, dir.field, links), phase_condition(ref, dir.field)};
  out.field.axpy(Complex(0.0, -state.eta), dir.field);
  out.field.axpy(Complex(0.0, -dir.scalar), state.psi);
  return out;
}

inline ExtendedVector apply_jacobian_extended(const ExtendedState& state, const ExtendedVector& dir,
                                              const ReferenceState& ref) {
  return apply_jacobian_extended(state, dir, ref, link_field(state.psi.grid(), state.mu));
}

/// Weighted realified matrix W (J(psi) + shift) on the interleaved (re, im) coordinates.
///
/// Symmetric because J is self-adjoint under the trapezoid-weighted real inner product;
/// used only to build preconditioners and shift-invert factorizations.
inline Eigen::SparseMatrix<double> assemble_weighted_jacobian(const OrderField& psi, const LinkField& links,
                                                              double shift) {
  const Grid& grid = psi.grid();
  require_same_grid(grid, links.grid(), "assemble_weighted_jacobian");
  const int hf = grid.half();
  const double inv_h2 = 1.0 / (grid.h() * grid.h());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(grid.size() * 20);

  auto add_block = [&](std::size_t row, std::size_t col, double scale, Complex c) {
    const auto r = static_cast<int>(2 * row);
    const auto q = static_cast<int>(2 * col);
    trip.emplace_back(r, q, scale * c.real());
    trip.emplace_back(r, q + 1, -scale * c.imag());
    trip.emplace_back(r + 1, q, scale * c.imag());
    trip.emplace_back(r + 1, q + 1, scale * c.real());
  };

  for (int j = -hf; j <= hf; ++j) {
    for (int i = -hf; i <= hf; ++i) {
      const std::size_t k = grid.index(i, j);
      const double w = grid.weight(k);
      const Complex p = psi[k];
      const double r2 = std::norm(p);
      const Complex p2 = p * p;
      const double d0 = 4.0 * inv_h2 + 2.0 * r2 - 1.0 + shift;
      const auto rr = static_cast<int>(2 * k);
      trip.emplace_back(rr, rr, w * (d0 + p2.real()));
      trip.emplace_back(rr, rr + 1, w * p2.imag());
      trip.emplace_back(rr + 1, rr, w * p2.imag());
      trip.emplace_back(rr + 1, rr + 1, w * (d0 - p2.real()));

      const double fx_fwd = (i == -hf) ? 2.0 : 1.0;
      const double fx_bwd = (i == hf) ? 2.0 : 1.0;
      if (i < hf) add_block(k, grid.index(i + 1, j), -w * fx_fwd * inv_h2, links.x(i, j));
      if (i > -hf) add_block(k, grid.index(i - 1, j), -w * fx_bwd * inv_h2, std::conj(links.x(i - 1, j)));
      const double fy_fwd = (j == -hf) ? 2.0 : 1.0;
      const double fy_bwd = (j == hf) ? 2.0 : 1.0;
      if (j < hf) add_block(k, grid.index(i, j + 1), -w * fy_fwd * inv_h2, links.y(i, j));
      if (j > -hf) add_block(k, grid.index(i, j - 1), -w * fy_bwd * inv_h2, std::conj(links.y(i, j - 1)));
    }
  }
  const auto n = static_cast<int>(2 * grid.size());
  Eigen::SparseMatrix<double> mat(n, n);
  mat.setFromTriplets(trip.begin(), trip.end());
  return mat;
}

}  // namespace glv
