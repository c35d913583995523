#pragma once

#include <random>

#include "glv/grid.hpp"

namespace glv::testing {

inline OrderField random_field(const Grid& grid, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  OrderField f(grid);
  for (auto& v : f.values()) v = Complex(dist(rng), dist(rng));
  return f;
}

inline double max_abs_diff(const OrderField& a, const OrderField& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
  return m;
}

inline double max_abs(const OrderField& a) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k]));
  return m;
}

}  // namespace glv::testing
