#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "glv/glop.hpp"

namespace glv {

/// Element theta_eta rho^r sigma^s of T x D4.
///
/// rho is the quarter turn (rho psi)_{i,j} = psi_{j,-i}; sigma the antilinear mirror
/// (sigma psi)_{i,j} = conj psi_{-i,j}; theta_eta multiplies by exp(i eta).
struct GroupElement {
  int r = 0;  // 0..3
  int s = 0;  // 0 or 1
  double eta = 0.0;

  bool operator==(const GroupElement& o) const { return r == o.r && s == o.s && eta == o.eta; }
  bool same_dihedral(const GroupElement& o) const { return r == o.r && s == o.s; }
};

inline GroupElement identity_element() { return {}; }
inline GroupElement rho(int power = 1) { return {((power % 4) + 4) % 4, 0, 0.0}; }
inline GroupElement sigma() { return {0, 1, 0.0}; }
inline GroupElement phase_shift(double eta) { return {0, 0, eta}; }

/// Abstract product; sigma rho = rho^{-1} sigma and sigma theta_eta = theta_{-eta} sigma.
inline GroupElement compose(const GroupElement& a, const GroupElement& b) {
  const int sign = a.s ? -1 : 1;
  GroupElement c;
  c.r = (((a.r + sign * b.r) % 4) + 4) % 4;
  c.s = a.s ^ b.s;
  c.eta = std::remainder(a.eta + sign * b.eta, 2.0 * std::numbers::pi);
  return c;
}

inline GroupElement inverse(const GroupElement& g) {
  // (theta rho^r sigma^s)^{-1}
  if (g.s) return g;  // reflections composed with a phase are involutions
  return {(4 - g.r) % 4, 0, -g.eta};
}

inline std::string to_string(const GroupElement& g) {
  std::string out;
  if (g.eta != 0.0) out += "theta(" + std::to_string(g.eta) + ")";
  if (g.r != 0) out += g.r == 1 ? "rho" : "rho^" + std::to_string(g.r);
  if (g.s) out += "sigma";
  return out.empty() ? "e" : out;
}

/// Action on an order field; exact index permutation, conjugation and phase.
inline OrderField act(const GroupElement& g, const OrderField& psi) {
  const Grid& grid = psi.grid();
  const int hf = grid.half();
  OrderField cur = psi;
  if (g.s) {
    OrderField t(grid);
    for (int j = -hf; j <= hf; ++j) {
      for (int i = -hf; i <= hf; ++i) t(i, j) = std::conj(cur(-i, j));
    }
    cur = std::move(t);
  }
  for (int q = 0; q < g.r; ++q) {
    OrderField t(grid);
    for (int j = -hf; j <= hf; ++j) {
      for (int i = -hf; i <= hf; ++i) t(i, j) = cur(j, -i);
    }
    cur = std::move(t);
  }
  if (g.eta != 0.0) cur *= std::polar(1.0, g.eta);
  return cur;
}

/// |act(g, residual(psi)) - residual(act(g, psi))| / max(1, |residual(psi)|).
inline double equivariance_residual(const GroupElement& g, const OrderField& psi, const LinkField& links) {
  const OrderField r = residual(psi, links);
  const OrderField lhs = act(g, r);
  const OrderField rhs = residual(act(g, psi), links);
  return norm(lhs - rhs) / std::max(1.0, norm(r));
}

/// The ten subgroups of D4.
enum class SubgroupId {
  trivial,
  c2,          // <rho^2>
  mirror_v,    // <sigma>, x -> -x
  mirror_h,    // <rho^2 sigma>, y -> -y
  diag_anti,   // <rho sigma>
  diag_main,   // <rho^3 sigma> = <sigma rho>
  c4,          // <rho>
  d2_mid,      // <rho^2, sigma>
  d2_diag,     // <rho^2, sigma rho>
  d4,
};

/// Conjugacy classes of isotropy subgroups.
enum class IsotropyLabel { d4, c4, d2_mid, d2_diag, mirror_mid, mirror_diag, c2, trivial };

inline constexpr std::array<SubgroupId, 10> kAllSubgroups = {
    SubgroupId::d4,       SubgroupId::c4,       SubgroupId::d2_mid,    SubgroupId::d2_diag,   SubgroupId::mirror_v,
    SubgroupId::mirror_h, SubgroupId::diag_anti, SubgroupId::diag_main, SubgroupId::c2,        SubgroupId::trivial};

inline std::vector<GroupElement> elements(SubgroupId id) {
  const GroupElement e{0, 0}, r1{1, 0}, r2{2, 0}, r3{3, 0};
  const GroupElement s0{0, 1}, s1{1, 1}, s2{2, 1}, s3{3, 1};
  switch (id) {
    case SubgroupId::trivial: return {e};
    case SubgroupId::c2: return {e, r2};
    case SubgroupId::mirror_v: return {e, s0};
    case SubgroupId::mirror_h: return {e, s2};
    case SubgroupId::diag_anti: return {e, s1};
    case SubgroupId::diag_main: return {e, s3};
    case SubgroupId::c4: return {e, r1, r2, r3};
    case SubgroupId::d2_mid: return {e, r2, s0, s2};
    case SubgroupId::d2_diag: return {e, r2, s1, s3};
    case SubgroupId::d4: return {e, r1, r2, r3, s0, s1, s2, s3};
  }
  return {e};
}

inline IsotropyLabel label_of(SubgroupId id) {
  switch (id) {
    case SubgroupId::d4: return IsotropyLabel::d4;
    case SubgroupId::c4: return IsotropyLabel::c4;
    case SubgroupId::d2_mid: return IsotropyLabel::d2_mid;
    case SubgroupId::d2_diag: return IsotropyLabel::d2_diag;
    case SubgroupId::mirror_v:
    case SubgroupId::mirror_h: return IsotropyLabel::mirror_mid;
    case SubgroupId::diag_anti:
    case SubgroupId::diag_main: return IsotropyLabel::mirror_diag;
    case SubgroupId::c2: return IsotropyLabel::c2;
    case SubgroupId::trivial: return IsotropyLabel::trivial;
  }
  return IsotropyLabel::trivial;
}

inline std::string_view to_string(IsotropyLabel l) {
  switch (l) {
    case IsotropyLabel::d4: return "D4";
    case IsotropyLabel::c4: return "C4";
    case IsotropyLabel::d2_mid: return "<rho2,sigma>";
    case IsotropyLabel::d2_diag: return "<rho2,sigma*rho>";
    case IsotropyLabel::mirror_mid: return "<sigma>";
    case IsotropyLabel::mirror_diag: return "<sigma*rho>";
    case IsotropyLabel::c2: return "<rho2>";
    case IsotropyLabel::trivial: return "trivial";
  }
  return "trivial";
}

inline IsotropyLabel parse_isotropy_label(std::string_view s) {
  for (auto l : {IsotropyLabel::d4, IsotropyLabel::c4, IsotropyLabel::d2_mid, IsotropyLabel::d2_diag,
                 IsotropyLabel::mirror_mid, IsotropyLabel::mirror_diag, IsotropyLabel::c2, IsotropyLabel::trivial}) {
    if (to_string(l) == s) return l;
  }
  throw std::invalid_argument("unknown isotropy label '" + std::string(s) + "'");
}

/// Distance of act(g, psi) from the phase orbit of psi, relative to |psi|.
inline double invariance_defect(const GroupElement& g, const OrderField& psi) {
  // formed explicitly; the closed form 2(|psi|^2 - |<psi, g psi>|) loses half the digits
  const OrderField gpsi = act(g, psi);
  const Complex c = inner_complex(psi, gpsi);
  const Complex ph = std::abs(c) > 0.0 ? c / std::abs(c) : Complex(1.0);
  return norm(gpsi - psi * ph) / norm(psi);
}

struct Isotropy {
  SubgroupId subgroup = SubgroupId::trivial;
  IsotropyLabel label = IsotropyLabel::trivial;
  std::array<double, 8> defects{};  // per dihedral element, index r + 4 s
};

/// Maximal subgroup of D4 leaving psi invariant modulo a global phase.
inline Isotropy isotropy(const OrderField& psi, double tol = 1e-6) {
  if (norm(psi) == 0.0) throw std::invalid_argument("isotropy: zero field is invariant under everything");
  Isotropy out;
  std::array<bool, 8> pass{};
  for (int s = 0; s < 2; ++s) {
    for (int r = 0; r < 4; ++r) {
      const double def = invariance_defect({r, s}, psi);
      out.defects[r + 4 * s] = def;
      pass[r + 4 * s] = def <= tol;
    }
  }
  // kAllSubgroups is ordered by decreasing size
  for (SubgroupId id : kAllSubgroups) {
    bool ok = true;
    for (const auto& g : elements(id)) ok = ok && pass[g.r + 4 * g.s];
    if (ok) {
      out.subgroup = id;
      out.label = label_of(id);
      return out;
    }
  }
  return out;
}

namespace detail {

// Multipliers c(g) with g f = c(g) f on the twisted fixed space selected by ref.
// Rotations carry roots of unity; reflections share one free phase.
inline std::vector<Complex> twist(SubgroupId id, const OrderField& ref) {
  const auto els = elements(id);
  int rot_gen = 0;  // smallest positive rotation in H
  for (const auto& g : els) {
    if (!g.s && g.r != 0 && (rot_gen == 0 || g.r < rot_gen)) rot_gen = g.r;
  }
  Complex c_rot = 1.0;
  if (rot_gen != 0) {
    const int order = 4 / rot_gen;
    const double a = std::arg(inner_complex(ref, act({rot_gen, 0}, ref)));
    const int k = static_cast<int>(std::lround(a * order / (2.0 * std::numbers::pi)));
    c_rot = std::polar(1.0, 2.0 * std::numbers::pi * k / order);
  }
  int refl = -1;
  for (const auto& g : els) {
    if (g.s && refl < 0) refl = g.r;
  }
  Complex c_refl = 1.0;
  if (refl >= 0) {
    const Complex ov = inner_complex(ref, act({refl, 1}, ref));
    if (std::abs(ov) > 0.0) c_refl = ov / std::abs(ov);
  }
  std::vector<Complex> c;
  for (const auto& g : els) {
    if (!g.s) {
      c.push_back(g.r == 0 ? Complex(1.0) : std::pow(c_rot, g.r / rot_gen));
    } else {
      const int rr = ((g.r - refl) % 4 + 4) % 4;  // g = rho^rr * (rho^refl sigma)
      c.push_back((rr == 0 ? Complex(1.0) : std::pow(c_rot, rr / rot_gen)) * c_refl);
    }
  }
  return c;
}

inline OrderField average(SubgroupId id, const OrderField& phi, const std::vector<Complex>& c) {
  const auto els = elements(id);
  OrderField out(phi.grid());
  for (std::size_t k = 0; k < els.size(); ++k) out.axpy(1.0 / c[k], act(els[k], phi));
  out *= 1.0 / static_cast<double>(els.size());
  return out;
}

}  // namespace detail

/// Group average of psi over H with phases chosen from psi itself.
/// The result satisfies g f = c(g) f for all g in H, i.e. it is H-invariant modulo phase.
inline OrderField project_fixed_space(const OrderField& psi, SubgroupId id) {
  return detail::average(id, psi, detail::twist(id, psi));
}

/// Projection of a perturbation onto the fixed space of H twisted like the reference state,
/// so reference + eps * result keeps the symmetry of H modulo one common phase.
inline OrderField project_fixed_space(const OrderField& phi, SubgroupId id, const OrderField& reference) {
  return detail::average(id, phi, detail::twist(id, reference));
}

}  // namespace glv
