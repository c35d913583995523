#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "glv/glop.hpp"

namespace glv {

/// Reduced energy -|Omega|^{-1} sum w |psi|^4; valid at solutions, in [-1, 0].
inline double free_energy(const OrderField& psi) {
  const auto w = psi.grid().weights();
  double acc = 0.0;
  for (std::size_t k = 0; k < psi.size(); ++k) {
    const double a = std::norm(psi[k]);
    acc += w[k] * a * a;
  }
  return -acc / psi.grid().area();
}

/// Kinetic plus condensation energy sum w (-|psi|^2 + |psi|^4 / 2) + <psi, K psi>.
///
/// Its gradient is 2 residual(psi) under inner_real; at a solution it equals
/// free_energy(psi) * d^2 / 2.
inline double full_energy(const OrderField& psi, const LinkField& links) {
  const auto w = psi.grid().weights();
  double acc = 0.0;
  for (std::size_t k = 0; k < psi.size(); ++k) {
    const double a = std::norm(psi[k]);
    acc += w[k] * (-a + 0.5 * a * a);
  }
  return acc + inner_real(psi, kinetic_apply(psi, links));
}

using GridLoop = std::vector<std::pair<int, int>>;

/// Counterclockwise boundary of the index rectangle [i0, i1] x [j0, j1].
inline GridLoop rectangle_loop(int i0, int j0, int i1, int j1) {
  if (i1 <= i0 || j1 <= j0) throw std::invalid_argument("rectangle_loop: empty rectangle");
  GridLoop loop;
  for (int i = i0; i < i1; ++i) loop.emplace_back(i, j0);
  for (int j = j0; j < j1; ++j) loop.emplace_back(i1, j);
  for (int i = i1; i > i0; --i) loop.emplace_back(i, j1);
  for (int j = j1; j > j0; --j) loop.emplace_back(i0, j);
  return loop;
}

inline constexpr double kWindingFloor = 1e-3;

/// Phase winding along a closed loop of grid nodes (last node connects to the first).
inline int winding_number(const OrderField& psi, const GridLoop& loop, double floor = kWindingFloor) {
  if (loop.size() < 3) throw std::invalid_argument("winding_number: loop needs at least three nodes");
  const Grid& grid = psi.grid();
  double total = 0.0;
  for (std::size_t k = 0; k < loop.size(); ++k) {
    const auto [i, j] = loop[k];
    const auto [i2, j2] = loop[(k + 1) % loop.size()];
    if (!grid.contains(i, j) || !grid.contains(i2, j2)) throw std::out_of_range("winding_number: loop leaves grid");
    const Complex a = psi(i, j), b = psi(i2, j2);
    if (std::abs(a) < floor) throw std::domain_error("winding_number: loop crosses a zero of psi");
    total += std::arg(b * std::conj(a));
  }
  return static_cast<int>(std::lround(total / (2.0 * std::numbers::pi)));
}

struct VortexRecord {
  double x = 0.0;
  double y = 0.0;
  int winding = 0;
  int multiplicity = 0;
};

inline constexpr double kNodeZeroFloor = 1e-8;
inline constexpr double kEdgeAmbiguity = 1e-6;

namespace detail {

struct Box {
  int i0, j0, i1, j1;  // inclusive plaquette ranges
  bool open = false;   // clipped at the boundary, so no loop encloses it
  bool overlaps(const Box& o) const { return !(i1 < o.i0 || o.i1 < i0 || j1 < o.j0 || o.j1 < j0); }
};

}  // namespace detail

/// Winding along the outermost loop on which |psi| stays above the floor.
inline std::optional<int> total_vorticity(const OrderField& psi, double floor = kWindingFloor) {
  const int hf = psi.grid().half();
  for (int ring = hf; ring >= 1; --ring) {
    try {
      return winding_number(psi, rectangle_loop(-ring, -ring, ring, ring), floor);
    } catch (const std::domain_error&) {
    }
  }
  return std::nullopt;
}

/// Vortices from plaquette windings.
///
/// A zero sitting on a node (|psi| below floor times the peak) or on an edge (phase jump
/// within kEdgeAmbiguity of pi, as on mirror axes) has no well-defined plaquette, so the
/// plaquettes around it are read as one loop. Adjacent plaquettes of equal sign are merged
/// (giant vortices).
inline std::vector<VortexRecord> vortex_census(const OrderField& psi, double floor = kNodeZeroFloor) {
  const Grid& grid = psi.grid();
  const int hf = grid.half();
  const int n = grid.n();
  double peak = 0.0;
  for (std::size_t k = 0; k < psi.size(); ++k) peak = std::max(peak, std::abs(psi[k]));
  if (peak == 0.0) return {};
  const double tiny = floor * peak;

  std::vector<detail::Box> boxes;
  auto add = [&](int i0, int j0, int i1, int j1) {
    detail::Box b{std::max(i0, -hf), std::max(j0, -hf), std::min(i1, hf - 1), std::min(j1, hf - 1)};
    b.open = b.i0 != i0 || b.j0 != j0 || b.i1 != i1 || b.j1 != j1;
    boxes.push_back(b);
  };
  auto ambiguous = [&](Complex a, Complex b) {
    return std::abs(a) >= tiny && std::abs(b) >= tiny &&
           std::abs(std::arg(b * std::conj(a))) > std::numbers::pi - kEdgeAmbiguity;
  };
  for (int j = -hf; j <= hf; ++j) {
    for (int i = -hf; i <= hf; ++i) {
      if (std::abs(psi(i, j)) < tiny) add(i - 1, j - 1, i, j);
      if (i < hf && ambiguous(psi(i, j), psi(i + 1, j))) add(i, j - 1, i, j);
      if (j < hf && ambiguous(psi(i, j), psi(i, j + 1))) add(i - 1, j, i, j);
    }
  }
  for (bool merged = true; merged;) {
    merged = false;
    for (std::size_t a = 0; a < boxes.size() && !merged; ++a) {
      for (std::size_t b = a + 1; b < boxes.size() && !merged; ++b) {
        if (boxes[a].overlaps(boxes[b])) {
          boxes[a] = {std::min(boxes[a].i0, boxes[b].i0), std::min(boxes[a].j0, boxes[b].j0),
                      std::max(boxes[a].i1, boxes[b].i1), std::max(boxes[a].j1, boxes[b].j1),
                      boxes[a].open || boxes[b].open};
          boxes.erase(boxes.begin() + static_cast<std::ptrdiff_t>(b));
          merged = true;
        }
      }
    }
  }

  std::vector<int> cell(static_cast<std::size_t>(n) * n, 0);
  auto cid = [&](int i, int j) { return static_cast<std::size_t>(i + hf) + static_cast<std::size_t>(j + hf) * n; };
  std::vector<char> covered(cell.size(), 0);
  std::vector<VortexRecord> out;

  for (const auto& b : boxes) {
    for (int j = b.j0; j <= b.j1; ++j) {
      for (int i = b.i0; i <= b.i1; ++i) covered[cid(i, j)] = 1;
    }
    if (b.open) continue;  // zero on the boundary
    int w = 0;
    try {
      w = winding_number(psi, rectangle_loop(b.i0, b.j0, b.i1 + 1, b.j1 + 1), tiny);
    } catch (const std::domain_error&) {
      continue;
    }
    if (w != 0) {
      out.push_back({0.5 * (grid.x(b.i0) + grid.x(b.i1 + 1)), 0.5 * (grid.y(b.j0) + grid.y(b.j1 + 1)), w, std::abs(w)});
    }
  }

  for (int j = -hf; j < hf; ++j) {
    for (int i = -hf; i < hf; ++i) {
      if (covered[cid(i, j)]) continue;
      cell[cid(i, j)] = winding_number(psi, rectangle_loop(i, j, i + 1, j + 1), tiny);
    }
  }

  // merge 4-connected plaquettes of equal sign
  std::vector<char> seen(cell.size(), 0);
  for (int j = -hf; j < hf; ++j) {
    for (int i = -hf; i < hf; ++i) {
      const int w0 = cell[cid(i, j)];
      if (w0 == 0 || seen[cid(i, j)]) continue;
      std::vector<std::pair<int, int>> stack{{i, j}};
      seen[cid(i, j)] = 1;
      int w = 0;
      double sx = 0.0, sy = 0.0;
      int count = 0;
      while (!stack.empty()) {
        auto [a, c] = stack.back();
        stack.pop_back();
        const int wc = cell[cid(a, c)];
        w += wc;
        sx += std::abs(wc) * (grid.x(a) + 0.5 * grid.h());
        sy += std::abs(wc) * (grid.y(c) + 0.5 * grid.h());
        count += std::abs(wc);
        const std::pair<int, int> nb[4] = {{a + 1, c}, {a - 1, c}, {a, c + 1}, {a, c - 1}};
        for (auto [p, q] : nb) {
          if (p < -hf || p >= hf || q < -hf || q >= hf) continue;
          if (seen[cid(p, q)] || cell[cid(p, q)] == 0 || (cell[cid(p, q)] > 0) != (w0 > 0)) continue;
          seen[cid(p, q)] = 1;
          stack.emplace_back(p, q);
        }
      }
      out.push_back({sx / count, sy / count, w, std::abs(w)});
    }
  }
  std::sort(out.begin(), out.end(), [](const VortexRecord& a, const VortexRecord& b) {
    return a.y != b.y ? a.y > b.y : a.x < b.x;
  });
  return out;
}

}  // namespace glv
