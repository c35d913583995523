#pragma once

#include <array>
#include <span>
#include <stdexcept>
#include <vector>

#include "glv/grid.hpp"

namespace glv {

/// Symmetric-gauge potential of the homogeneous field (0, 0, mu): A = (-mu y, mu x) / 2.
inline std::array<double, 2> vector_potential(double mu, double x, double y) {
  return {-0.5 * mu * y, 0.5 * mu * x};
}

/// Exact line integral of A_x along [x_i, x_{i+1}] at height y_j.
inline double edge_integral_x(double mu, int i, int j, const Grid& grid) {
  const int hf = grid.half();
  if (i < -hf || i >= hf || j < -hf || j > hf) {
    throw std::out_of_range("edge_integral_x: edge outside grid");
  }
  return -0.5 * mu * grid.y(j) * grid.h();
}

/// Exact line integral of A_y along [y_j, y_{j+1}] at abscissa x_i.
inline double edge_integral_y(double mu, int i, int j, const Grid& grid) {
  const int hf = grid.half();
  if (j < -hf || j >= hf || i < -hf || i > hf) {
    throw std::out_of_range("edge_integral_y: edge outside grid");
  }
  return 0.5 * mu * grid.x(i) * grid.h();
}

/// Unit link variables on the edges of a grid.
///
/// x(i, j) is the link from node (i, j) to (i+1, j); y(i, j) from (i, j) to (i, j+1).
/// The reversed edge carries the conjugate value.
class LinkField {
 public:
  LinkField() = default;
  LinkField(Grid grid, double mu)
      : grid_(std::move(grid)), mu_(mu),
        ux_(static_cast<std::size_t>(grid_.n()) * grid_.nodes_per_edge()),
        uy_(static_cast<std::size_t>(grid_.n()) * grid_.nodes_per_edge()) {}

  const Grid& grid() const { return grid_; }
  double mu() const { return mu_; }

  Complex& x(int i, int j) { return ux_[xi(i, j)]; }
  const Complex& x(int i, int j) const { return ux_[xi(i, j)]; }
  Complex& y(int i, int j) { return uy_[yi(i, j)]; }
  const Complex& y(int i, int j) const { return uy_[yi(i, j)]; }

  std::span<const Complex> x_links() const { return ux_; }
  std::span<const Complex> y_links() const { return uy_; }

 private:
  std::size_t xi(int i, int j) const {
    const int hf = grid_.half();
    return static_cast<std::size_t>(i + hf) + static_cast<std::size_t>(j + hf) * grid_.n();
  }
  std::size_t yi(int i, int j) const {
    const int hf = grid_.half();
    return static_cast<std::size_t>(i + hf) + static_cast<std::size_t>(j + hf) * grid_.nodes_per_edge();
  }

  Grid grid_;
  double mu_ = 0.0;
  std::vector<Complex> ux_;
  std::vector<Complex> uy_;
};

/// Links exp(-i * integral of A) for the field strength mu, using the exact edge integrals.
inline LinkField link_field(const Grid& grid, double mu) {
  LinkField links(grid, mu);
  const int hf = grid.half();
  for (int j = -hf; j <= hf; ++j) {
    for (int i = -hf; i < hf; ++i) {
      links.x(i, j) = std::polar(1.0, -edge_integral_x(mu, i, j, grid));
    }
  }
  for (int j = -hf; j < hf; ++j) {
    for (int i = -hf; i <= hf; ++i) {
      links.y(i, j) = std::polar(1.0, -edge_integral_y(mu, i, j, grid));
    }
  }
  return links;
}

/// Links transformed with the node phases chi: U_ab -> exp(i chi_a) U_ab exp(-i chi_b).
/// Together with psi -> psi exp(i chi) this is a lattice gauge transformation.
inline LinkField gauge_transform(const LinkField& links, std::span<const double> chi) {
  const Grid& grid = links.grid();
  if (chi.size() != grid.size()) {
    throw std::invalid_argument("gauge_transform: phase field size mismatch");
  }
  LinkField out = links;
  const int hf = grid.half();
  for (int j = -hf; j <= hf; ++j) {
    for (int i = -hf; i < hf; ++i) {
      out.x(i, j) *= std::polar(1.0, chi[grid.index(i, j)] - chi[grid.index(i + 1, j)]);
    }
  }
  for (int j = -hf; j < hf; ++j) {
    for (int i = -hf; i <= hf; ++i) {
      out.y(i, j) *= std::polar(1.0, chi[grid.index(i, j)] - chi[grid.index(i, j + 1)]);
    }
  }
  return out;
}

/// d/dmu of every link; same layout as LinkField but the entries are not unit modulus.
inline LinkField link_field_dmu(const Grid& grid, double mu) {
  LinkField links = link_field(grid, mu);
  const int hf = grid.half();
  for (int j = -hf; j <= hf; ++j) {
    for (int i = -hf; i < hf; ++i) {
      links.x(i, j) *= Complex(0.0, -edge_integral_x(1.0, i, j, grid));
    }
  }
  for (int j = -hf; j < hf; ++j) {
    for (int i = -hf; i <= hf; ++i) {
      links.y(i, j) *= Complex(0.0, -edge_integral_y(1.0, i, j, grid));
    }
  }
  return links;
}

}  // namespace glv
