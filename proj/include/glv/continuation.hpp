#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "glv/bordered.hpp"
#include "glv/newton.hpp"
#include "glv/postproc.hpp"
#include "glv/spectrum.hpp"
#include "glv/symmetry.hpp"

namespace glv {

/// Direction in (psi, mu) space, unit under |dpsi|^2 / d^2 + dmu^2.
struct Tangent {
  OrderField psi;
  double mu = 0.0;
};

/// Combined norm; the field part is the rms amplitude so both parts are O(1).
inline double combined_norm(const OrderField& dpsi, double dmu) {
  const double d = dpsi.grid().d();
  return std::sqrt(inner_real(dpsi, dpsi) / (d * d) + dmu * dmu);
}

inline double combined_dot(const Tangent& a, const OrderField& dpsi, double dmu) {
  const double d = dpsi.grid().d();
  return inner_real(a.psi, dpsi) / (d * d) + a.mu * dmu;
}

struct BranchPoint {
  ExtendedState state;
  double energy = 0.0;
  StabilityInfo stability;  // eigenfields dropped for stored points
  Isotropy isotropy;
  double arclength = 0.0;
  std::optional<int> total_vorticity;
  int newton_iterations = 0;
  double residual_norm = 0.0;
};

enum class BifurcationType { turning, simple_pitchfork, double_d4 };

inline const char* to_string(BifurcationType t) {
  switch (t) {
    case BifurcationType::turning: return "turning";
    case BifurcationType::simple_pitchfork: return "simple";
    case BifurcationType::double_d4: return "double";
  }
  return "unknown";
}

struct BifurcationPoint {
  int id = 0;
  double mu = 0.0;
  ExtendedState state;
  int multiplicity = 0;
  BifurcationType type = BifurcationType::simple_pitchfork;
  double critical_value = 0.0;
  std::vector<OrderField> critical_fields;
  Isotropy isotropy;
  double arclength = 0.0;
  std::size_t segment = 0;  // index of the branch point preceding the crossing
  bool index_change = true;  // false for a fold without a crossing in the stored spectra
  std::string branch;
};

enum class Termination { window, trivial_state, step_failure, max_points, fold, closed, none };

inline const char* to_string(Termination t) {
  switch (t) {
    case Termination::window: return "window";
    case Termination::trivial_state: return "trivial_state";
    case Termination::step_failure: return "step_failure";
    case Termination::max_points: return "max_points";
    case Termination::fold: return "fold";
    case Termination::closed: return "closed";
    case Termination::none: return "none";
  }
  return "unknown";
}

struct Branch {
  std::string label;
  std::optional<int> parent;  // bifurcation id this branch was switched from
  std::vector<BranchPoint> points;
  std::vector<BifurcationPoint> bifurcations;
  Termination termination = Termination::none;
  std::optional<double> end_mu;  // extrapolated junction with the normal state
};

struct ContinuationSettings {
  double ds = 0.05;
  double ds_min = 1e-5;
  double ds_max = 0.1;
  double grow = 1.3;
  int fast_iterations = 4;
  int corrector_iterations = 10;
  double tol = 1e-10;
  double linear_tol = 1e-11;
  int linear_maxit = 300;
  double mu_min = -std::numeric_limits<double>::infinity();
  double mu_max = std::numeric_limits<double>::infinity();
  int max_points = 500;
  int direction = +1;  // initial sense of mu when no tangent is supplied
  double trivial_norm = 1e-4;  // rms amplitude
  double isotropy_tol = 1e-6;
  bool detect = true;
  bool stop_on_fold = false;
  double loc_tol_lambda = 1e-6;
  double loc_tol_mu = 1e-3;
  int loc_max_probes = 40;
  StabilitySettings stability{};
  double shift = kDefaultJacobianShift;
  std::function<void(const BranchPoint&)> on_point;  // progress hook
};

namespace detail {

struct CorrectorResult {
  ExtendedState state;
  int iterations = 0;
  double residual = 0.0;
  bool converged = false;
  bool trivial = false;
};

// Newton on (GL - i eta psi, Im <psi0, psi>, <t, x - base> - ds) in (psi, eta, mu).
inline CorrectorResult correct(const ExtendedState& base, const Tangent& t, double ds, const OrderField& psi0,
                               const ContinuationSettings& cs, const ExtendedState* start = nullptr) {
  const Grid& grid = base.psi.grid();
  const double d2 = grid.d() * grid.d();
  CorrectorResult res;
  if (start) {
    res.state = *start;
  } else {
    res.state = base;
    res.state.psi.axpy(ds, t.psi);
    res.state.mu += ds * t.mu;
  }
  const Vector arc_row = realified_weights(grid).cwiseProduct(to_vector(t.psi)) / d2;
  const Vector g0 = phase_row(psi0);
  double first = -1.0;
  for (int it = 0;; ++it) {
    const LinkField links = link_field(grid, res.state.mu);
    OrderField f = residual(res.state.psi, links);
    f.axpy(Complex(0.0, -res.state.eta), res.state.psi);
    const double g1 = phase_condition(ReferenceState{psi0}, res.state.psi);
    OrderField dpsi = res.state.psi - base.psi;
    const double g2 = combined_dot(t, dpsi, res.state.mu - base.mu) - ds;
    const double r = std::sqrt(inner_real(f, f) + g1 * g1 + g2 * g2);
    res.residual = r;
    res.iterations = it;
    if (first < 0.0) first = r;
    if (!std::isfinite(r) || r > 1e4 * std::max(first, cs.tol)) return res;
    if (rms(res.state.psi) < cs.trivial_norm) {
      res.trivial = true;
      return res;
    }
    if (r <= cs.tol) {
      res.converged = true;
      return res;
    }
    if (it >= cs.corrector_iterations) return res;

    BorderedJacobian jac{res.state.psi,
                         links,
                         res.state.eta,
                         {phase_column(res.state.psi), to_vector(residual_dmu(res.state.psi, res.state.mu))},
                         {g0, arc_row},
                         Matrix::Zero(2, 2)};
    jac.corner(1, 1) = t.mu;
    std::shared_ptr<const ShiftedJacobianFactor> factor;
    try {
      factor = std::make_shared<const ShiftedJacobianFactor>(res.state.psi, links, cs.shift);
    } catch (const std::runtime_error&) {
      return res;
    }
    Vector rhs = to_vector(f, 2);
    rhs(rhs.size() - 2) = g1;
    rhs(rhs.size() - 1) = g2;
    rhs = -rhs;
    const LinearOperator op = jac.op();
    auto [delta, rep] = solve_general(op, rhs, cs.linear_tol, cs.linear_maxit, jac.preconditioner(factor));
    if (!delta.allFinite() || rep.relative_residual > 1e-3) return res;
    res.state.psi += to_field(delta, grid);
    res.state.eta += delta(delta.size() - 2);
    res.state.mu += delta(delta.size() - 1);
  }
}

}  // namespace detail

/// Normalized secant from a to b; throws for coincident points.
inline Tangent tangent(const BranchPoint& a, const BranchPoint& b) {
  Tangent t{b.state.psi - a.state.psi, b.state.mu - a.state.mu};
  const double n = combined_norm(t.psi, t.mu);
  if (!(n > 0.0)) throw std::invalid_argument("tangent: coincident branch points");
  t.psi *= 1.0 / n;
  t.mu /= n;
  return t;
}

/// Secant direction of the tail, or a pure mu step when only one point exists.
inline Tangent tangent(const std::vector<BranchPoint>& tail, int direction = +1) {
  if (tail.empty()) throw std::invalid_argument("tangent: empty branch");
  if (tail.size() == 1) return Tangent{OrderField(tail.back().state.psi.grid()), direction >= 0 ? 1.0 : -1.0};
  return tangent(tail[tail.size() - 2], tail.back());
}

/// Tangent from the linearized extended system at a regular solution.
inline std::optional<Tangent> linear_tangent(const ExtendedState& s, int direction = +1,
                                             double shift = kDefaultJacobianShift) {
  const Grid& grid = s.psi.grid();
  const LinkField links = link_field(grid, s.mu);
  BorderedJacobian jac{s.psi, links, s.eta, {phase_column(s.psi)}, {phase_row(s.psi)}, Matrix::Zero(1, 1)};
  auto factor = std::make_shared<const ShiftedJacobianFactor>(s.psi, links, shift);
  Vector rhs = -to_vector(residual_dmu(s.psi, s.mu), 1);
  const LinearOperator op = jac.op();
  auto [v, rep] = solve_general(op, rhs, 1e-10, 500, jac.preconditioner(factor));
  if (!rep.converged) return std::nullopt;
  Tangent t{to_field(v, grid), 1.0};
  const double n = combined_norm(t.psi, t.mu) * (direction >= 0 ? 1.0 : -1.0);
  t.psi *= 1.0 / n;
  t.mu /= n;
  return t;
}

/// Energy, stability, isotropy and vorticity of a converged state.
inline BranchPoint make_point(const ExtendedState& s, const ContinuationSettings& cs, bool keep_fields = false) {
  BranchPoint p;
  p.state = s;
  const LinkField links = link_field(s.psi.grid(), s.mu);
  p.energy = free_energy(s.psi);
  p.stability = stability(s.psi, links, cs.stability);
  if (!keep_fields) p.stability.eigenfields.clear();
  p.isotropy = isotropy(s.psi, cs.isotropy_tol);
  p.total_vorticity = total_vorticity(s.psi);
  p.residual_norm = norm(residual(s.psi, links));
  return p;
}

/// One pseudo-arclength step from the tail of the branch with adaptive ds.
/// Returns the new point, or nullopt when ds fell below ds_min; ds is updated in place.
inline std::optional<BranchPoint> arclength_step(const Branch& branch, const Tangent& t, double& ds,
                                                 const ContinuationSettings& cs, bool* trivial = nullptr) {
  if (branch.points.empty()) throw std::invalid_argument("arclength_step: empty branch");
  const BranchPoint& tail = branch.points.back();
  while (std::abs(ds) >= cs.ds_min) {
    auto r = detail::correct(tail.state, t, ds, tail.state.psi, cs);
    if (r.trivial) {
      if (trivial) *trivial = true;
      return std::nullopt;
    }
    if (r.converged) {
      BranchPoint p = make_point(r.state, cs);
      p.arclength = tail.arclength + std::abs(ds);
      p.newton_iterations = r.iterations;
      if (r.iterations <= cs.fast_iterations) ds = std::copysign(std::min(std::abs(ds) * cs.grow, cs.ds_max), ds);
      return p;
    }
    ds *= 0.5;
  }
  return std::nullopt;
}

namespace detail {

struct Probe {
  double s = 0.0;
  ExtendedState state;
  StabilityInfo stab;
};

inline std::optional<Probe> probe(const BranchPoint& a, const Tangent& t, double s, const ContinuationSettings& cs,
                                  bool fields, const ExtendedState* start = nullptr) {
  auto r = correct(a.state, t, s, a.state.psi, cs, start);
  if (!r.converged) return std::nullopt;
  Probe p;
  p.s = s;
  p.state = r.state;
  StabilitySettings ss = cs.stability;
  p.stab = stability(p.state.psi, link_field(p.state.psi.grid(), p.state.mu), ss);
  if (!fields) p.stab.eigenfields.clear();
  return p;
}

inline double sorted_eigenvalue(const StabilityInfo& st, int k) {
  if (k < 0 || k >= static_cast<int>(st.eigenvalues.size())) return std::numeric_limits<double>::quiet_NaN();
  return st.eigenvalues[k];
}

inline void fill_critical(BifurcationPoint& bp, const StabilityInfo& st, double gap) {
  bp.critical_value = st.critical_value;
  bp.multiplicity = 0;
  bp.critical_fields.clear();
  for (std::size_t k = 0; k < st.eigenvalues.size(); ++k) {
    if (std::abs(st.eigenvalues[k] - st.critical_value) <= gap) {
      ++bp.multiplicity;
      if (k < st.eigenfields.size()) bp.critical_fields.push_back(st.eigenfields[k]);
    }
  }
}

}  // namespace detail

namespace detail {

// Regula falsi (Illinois) in arclength for a zero of the k-th deflated eigenvalue on the segment a-b.
inline std::optional<Probe> localize_crossing(const BranchPoint& a, const BranchPoint& b, int k,
                                              const ContinuationSettings& cs) {
  const Tangent t = tangent(a, b);
  const double S = combined_norm(b.state.psi - a.state.psi, b.state.mu - a.state.mu);
  double slo = 0.0, shi = S;
  double flo = sorted_eigenvalue(a.stability, k), fhi = sorted_eigenvalue(b.stability, k);
  if (!std::isfinite(flo) || !std::isfinite(fhi)) return std::nullopt;
  std::optional<Probe> best;
  int side = 0;
  for (int it = 0; it < cs.loc_max_probes; ++it) {
    double s = (flo * fhi < 0.0) ? shi - fhi * (shi - slo) / (fhi - flo) : 0.5 * (slo + shi);
    if (!(s > slo && s < shi)) s = 0.5 * (slo + shi);
    auto p = probe(a, t, s, cs, true);
    if (!p) {
      s = 0.5 * (slo + shi);
      p = probe(a, t, s, cs, true);
      if (!p) break;
    }
    const double f = sorted_eigenvalue(p->stab, k);
    best = std::move(p);
    if (!std::isfinite(f)) break;
    if (std::abs(f) <= cs.loc_tol_lambda) break;
    if ((f < 0.0) == (flo < 0.0)) {
      slo = s;
      flo = f;
      if (side == -1) fhi *= 0.5;
      side = -1;
    } else {
      shi = s;
      fhi = f;
      if (side == +1) flo *= 0.5;
      side = +1;
    }
  }
  return best;
}

}  // namespace detail

/// Localizes every eigenvalue crossing between consecutive points.
///
/// Each crossing index is found separately, so a simple and a double crossing inside one
/// step come out as two points; eigenvalues within the clustering gap of the crossing one
/// count towards its multiplicity.
inline std::vector<BifurcationPoint> detect_bifurcations(const BranchPoint& a, const BranchPoint& b,
                                                         const ContinuationSettings& cs) {
  std::vector<BifurcationPoint> out;
  const int na = a.stability.n_unstable, nb = b.stability.n_unstable;
  if (na == nb) return out;
  const int lo = std::min(na, nb), hi = std::max(na, nb);
  for (int k = lo; k < hi;) {
    auto best = detail::localize_crossing(a, b, k, cs);
    if (!best) break;
    BifurcationPoint bp;
    bp.mu = best->state.mu;
    bp.state = best->state;
    bp.arclength = a.arclength + best->s;
    // the singular corrector can leak into symmetry-breaking directions; between two points of
    // equal isotropy the segment keeps it
    bp.isotropy = a.isotropy.subgroup == b.isotropy.subgroup ? a.isotropy : isotropy(best->state.psi, cs.isotropy_tol);
    StabilityInfo st = best->stab;
    st.critical_index = k;
    st.critical_value = detail::sorted_eigenvalue(st, k);
    detail::fill_critical(bp, st, cs.stability.gap);
    bp.multiplicity = std::max(bp.multiplicity, 1);
    const bool extremum = (bp.mu - a.state.mu) * (b.state.mu - bp.mu) < 0.0;
    if (extremum && bp.multiplicity == 1) {
      bp.type = BifurcationType::turning;
    } else {
      bp.type = bp.multiplicity >= 2 ? BifurcationType::double_d4 : BifurcationType::simple_pitchfork;
    }
    // partners of the cluster above k cross here too
    int above = 0;
    for (std::size_t q = k + 1; q < st.eigenvalues.size(); ++q) {
      above += std::abs(st.eigenvalues[q] - st.critical_value) <= cs.stability.gap ? 1 : 0;
    }
    k += 1 + above;
    out.push_back(std::move(bp));
  }
  std::sort(out.begin(), out.end(), [](const BifurcationPoint& x, const BifurcationPoint& y) {
    return x.arclength < y.arclength;
  });
  return out;
}

namespace detail {

// Lagrange interpolation of (psi, mu) through points at s = 0, s1, s2.
inline ExtendedState quadratic_predictor(const BranchPoint& p0, const BranchPoint& p1, const BranchPoint& p2,
                                         double s1, double s2, double s) {
  const double l0 = (s - s1) * (s - s2) / ((0.0 - s1) * (0.0 - s2));
  const double l1 = (s - 0.0) * (s - s2) / ((s1 - 0.0) * (s1 - s2));
  const double l2 = (s - 0.0) * (s - s1) / ((s2 - 0.0) * (s2 - s1));
  ExtendedState out;
  out.psi = l0 * p0.state.psi;
  out.psi.axpy(l1, p1.state.psi);
  out.psi.axpy(l2, p2.state.psi);
  out.mu = l0 * p0.state.mu + l1 * p1.state.mu + l2 * p2.state.mu;
  out.eta = 0.0;
  return out;
}

}  // namespace detail

/// Fold in mu near the middle of three consecutive points, refined by parabolic probes.
inline std::optional<BifurcationPoint> locate_fold(const BranchPoint& p0, const BranchPoint& p1, const BranchPoint& p2,
                                                   const ContinuationSettings& cs) {
  if ((p1.state.mu - p0.state.mu) * (p2.state.mu - p1.state.mu) >= 0.0) return std::nullopt;
  const Tangent t = tangent(p0, p2);
  std::vector<std::pair<double, detail::Probe>> pts;
  auto s_of = [&](const BranchPoint& q) { return combined_dot(t, q.state.psi - p0.state.psi, q.state.mu - p0.state.mu); };
  double s[3] = {0.0, s_of(p1), s_of(p2)};
  double m[3] = {p0.state.mu, p1.state.mu, p2.state.mu};
  std::optional<detail::Probe> last;
  for (int it = 0; it < 8; ++it) {
    // vertex of the parabola through (s_k, m_k)
    const double d01 = (m[1] - m[0]) / (s[1] - s[0]), d12 = (m[2] - m[1]) / (s[2] - s[1]);
    const double c2 = (d12 - d01) / (s[2] - s[0]);
    if (c2 == 0.0) break;
    const double sv = 0.5 * (s[0] + s[1]) - d01 / (2.0 * c2);
    if (!(sv > std::min(s[0], s[2]) && sv < std::max(s[0], s[2]))) break;
    // quadratic interpolation of the three branch points keeps the corrector on this branch
    // where another branch crosses the probe hyperplane nearby
    const ExtendedState start = detail::quadratic_predictor(p0, p1, p2, s_of(p1), s_of(p2), sv);
    auto p = detail::probe(p0, t, sv, cs, false, &start);
    if (!p) break;
    const double mv = p->state.mu;
    const double change = std::abs(mv - m[1]);
    last = std::move(p);
    // keep the three probes nearest the vertex
    double ss[4] = {s[0], s[1], s[2], sv}, mm[4] = {m[0], m[1], m[2], mv};
    int idx[4] = {0, 1, 2, 3};
    std::sort(idx, idx + 4, [&](int x, int y) { return std::abs(ss[x] - sv) < std::abs(ss[y] - sv); });
    int keep[3] = {idx[0], idx[1], idx[2]};
    std::sort(keep, keep + 3, [&](int x, int y) { return ss[x] < ss[y]; });
    for (int q = 0; q < 3; ++q) {
      s[q] = ss[keep[q]];
      m[q] = mm[keep[q]];
    }
    if (change < 1e-10) break;
  }
  BifurcationPoint bp;
  bp.type = BifurcationType::turning;
  bp.index_change = false;
  ExtendedState st = last ? last->state : p1.state;
  bp.mu = st.mu;
  bp.state = st;
  const StabilityInfo info = stability(st.psi, link_field(st.psi.grid(), st.mu), cs.stability);
  bp.isotropy = isotropy(st.psi, cs.isotropy_tol);
  detail::fill_critical(bp, info, cs.stability.gap);
  bp.arclength = p0.arclength + (last ? last->s : s[1]);
  return bp;
}

/// A seed for an emerging branch: a unit direction in the fixed space of an axial subgroup.
struct SwitchSeed {
  SubgroupId subgroup = SubgroupId::trivial;
  IsotropyLabel label = IsotropyLabel::trivial;
  OrderField direction;  // unit rms amplitude
  OrderField guess;  // psi* + eps * |psi*|_rms * direction
  int sign = +1;
};

/// Equivariant branching: for every subgroup H of the isotropy of psi* whose fixed space meets
/// the critical eigenspace in one dimension, seeds psi* +/- eps * direction. One representative
/// per conjugacy class unless all_conjugates is set. Simple eigenvalues give psi* +/- eps phi.
inline std::vector<SwitchSeed> switch_branch(const BifurcationPoint& bif, double eps = 0.05,
                                             std::optional<std::vector<IsotropyLabel>> families = std::nullopt,
                                             bool all_conjugates = false) {
  if (bif.critical_fields.empty()) throw std::invalid_argument("switch_branch: no critical eigenfields recorded");
  const OrderField& ref = bif.state.psi;
  const double amp = rms(ref);
  std::vector<SwitchSeed> out;
  std::vector<IsotropyLabel> seen;

  auto add = [&](SubgroupId id, IsotropyLabel label, OrderField dir) {
    dir *= 1.0 / rms(dir);
    for (int sign : {+1, -1}) {
      SwitchSeed sd;
      sd.subgroup = id;
      sd.label = label;
      sd.direction = dir * static_cast<double>(sign);
      sd.guess = ref;
      sd.guess.axpy(sign * eps * amp, dir);
      sd.sign = sign;
      out.push_back(std::move(sd));
    }
  };

  const Isotropy& base_iso = bif.isotropy;
  const auto base_elements = elements(base_iso.subgroup);
  auto contained = [&](SubgroupId h) {
    for (const auto& g : elements(h)) {
      bool found = false;
      for (const auto& e : base_elements) found = found || e.same_dihedral(g);
      if (!found) return false;
    }
    return true;
  };

  // dimension of Fix(H) within the critical space, with a basis vector when it is one
  auto fixed_dim = [&](SubgroupId h, OrderField* basis) {
    std::vector<OrderField> proj;
    for (const auto& phi : bif.critical_fields) proj.push_back(project_fixed_space(phi, h, ref));
    const int m = static_cast<int>(proj.size());
    Matrix gram(m, m);
    for (int i = 0; i < m; ++i) {
      for (int j = 0; j < m; ++j) gram(i, j) = inner_real(proj[i], proj[j]);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
    // the critical fields have unit norm, so a genuine fixed direction keeps an O(1) share
    int dim = 0;
    for (int i = 0; i < m; ++i) dim += es.eigenvalues()(i) > 1e-3 ? 1 : 0;
    if (dim == 1 && basis) {
      const Vector c = es.eigenvectors().col(m - 1);
      OrderField v(ref.grid());
      for (int i = 0; i < m; ++i) v.axpy(c(i), proj[i]);
      *basis = std::move(v);
    }
    return dim;
  };

  std::vector<std::pair<SubgroupId, OrderField>> axial;
  for (SubgroupId h : kAllSubgroups) {
    if (h == base_iso.subgroup || !contained(h)) continue;
    OrderField v;
    if (fixed_dim(h, &v) == 1) axial.emplace_back(h, std::move(v));
  }
  // keep maximal ones: drop H if a strictly larger axial subgroup contains it
  auto subset = [](SubgroupId a, SubgroupId b) {
    for (const auto& g : elements(a)) {
      bool f = false;
      for (const auto& e : elements(b)) f = f || e.same_dihedral(g);
      if (!f) return false;
    }
    return true;
  };
  for (const auto& [h, v] : axial) {
    bool maximal = true;
    for (const auto& [h2, v2] : axial) {
      if (h2 != h && subset(h, h2)) maximal = false;
    }
    if (!maximal) continue;
    const IsotropyLabel label = label_of(h);
    if (families && std::find(families->begin(), families->end(), label) == families->end()) continue;
    if (!all_conjugates && std::find(seen.begin(), seen.end(), label) != seen.end()) continue;
    seen.push_back(label);
    add(h, label, v);
  }
  if (out.empty() && bif.critical_fields.size() == 1) {
    const OrderField& phi = bif.critical_fields.front();
    const auto iso = isotropy(ref + (eps * amp / rms(phi)) * phi, 1e-6);
    add(iso.subgroup, iso.label, phi);
  }
  return out;
}

namespace detail {

// mu at which |psi|^2 extrapolates to zero from the last points of the branch
inline std::optional<double> extrapolate_normal_state(const std::vector<BranchPoint>& pts) {
  if (pts.size() < 2) return std::nullopt;
  const std::size_t n = std::min<std::size_t>(3, pts.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = pts.size() - n; k < pts.size(); ++k) {
    const double x = pts[k].state.mu;
    const double y = inner_real(pts[k].state.psi, pts[k].state.psi);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double den = n * sxx - sx * sx;
  if (den == 0.0) return std::nullopt;
  const double b = (n * sxy - sx * sy) / den;
  const double a = (sy - b * sx) / n;
  if (b == 0.0) return std::nullopt;
  return -a / b;
}

// True when the segment a-b passes within a fraction of its length of a D4 image of the
// first point. Loops such as a pitchfork branch that rejoins its own base return to a
// rotated copy of where they started, so a plain distance test would miss them.
inline bool closes_on(const BranchPoint& first, const BranchPoint& a, const BranchPoint& b, double frac = 0.25) {
  const OrderField ab = b.state.psi - a.state.psi;
  const double dmu = b.state.mu - a.state.mu;
  const double len = combined_norm(ab, dmu);
  if (!(len > 0.0)) return false;
  for (int s = 0; s < 2; ++s) {
    for (int r = 0; r < 4; ++r) {
      OrderField p = act(GroupElement{r, s, 0.0}, first.state.psi);
      const Complex c = inner_complex(p, a.state.psi);
      if (std::abs(c) > 0.0) p *= c / std::abs(c);
      const OrderField ap = p - a.state.psi;
      const double amu = first.state.mu - a.state.mu;
      const double d2 = a.state.psi.grid().d() * a.state.psi.grid().d();
      const double tt = std::clamp((inner_real(ab, ap) / d2 + dmu * amu) / (len * len), 0.0, 1.0);
      OrderField e = ap;
      e.axpy(-tt, ab);
      if (combined_norm(e, amu - tt * dmu) < frac * len) return true;
    }
  }
  return false;
}

}  // namespace detail

/// Continues a branch from a converged starting point (or a guess) until the mu window is left,
/// the state collapses onto psi = 0, the step size underflows, the branch closes on itself
/// (up to symmetry), or max_points is reached.
inline Branch trace_branch(const BranchPoint& start, std::optional<Tangent> first_tangent,
                           const ContinuationSettings& cs, std::string label = {}) {
  Branch br;
  br.label = std::move(label);
  br.points.push_back(start);
  if (cs.on_point) cs.on_point(start);
  Tangent t;
  if (first_tangent) {
    t = *first_tangent;
  } else if (auto lt = linear_tangent(start.state, cs.direction, cs.shift)) {
    t = *lt;
  } else {
    t = tangent(br.points, cs.direction);
  }
  double ds = cs.ds;
  int next_id = 1;
  while (true) {
    if (static_cast<int>(br.points.size()) >= cs.max_points) {
      br.termination = Termination::max_points;
      break;
    }
    bool trivial = false;
    auto p = arclength_step(br, t, ds, cs, &trivial);
    if (!p) {
      const BranchPoint& tail = br.points.back();
      if (trivial || rms(tail.state.psi) < 0.05) {
        br.termination = Termination::trivial_state;
        br.end_mu = detail::extrapolate_normal_state(br.points);
      } else {
        br.termination = Termination::step_failure;
      }
      break;
    }
    const BranchPoint& prev = br.points.back();
    // passing through psi = 0 flips the sign relative to the predecessor
    if (inner_real(prev.state.psi, p->state.psi) < 0.0) {
      br.termination = Termination::trivial_state;
      br.end_mu = detail::extrapolate_normal_state(br.points);
      break;
    }
    br.points.push_back(std::move(*p));
    if (cs.on_point) cs.on_point(br.points.back());
    const std::size_t nb = br.points.size();
    t = tangent(br.points[nb - 2], br.points[nb - 1]);

    bool fold_stop = false;
    if (cs.detect) {
      for (auto& bif : detect_bifurcations(br.points[nb - 2], br.points[nb - 1], cs)) {
        bif.id = next_id++;
        bif.segment = nb - 2;
        bif.branch = br.label;
        br.bifurcations.push_back(std::move(bif));
      }
      if (nb >= 3) {
        if (auto fold = locate_fold(br.points[nb - 3], br.points[nb - 2], br.points[nb - 1], cs)) {
          // a fold that coincides with an index change is already recorded as a turning point
          bool dup = false;
          for (const auto& b : br.bifurcations) {
            dup = dup || (b.type == BifurcationType::turning && std::abs(b.mu - fold->mu) < 1e-4);
          }
          if (!dup) {
            fold->id = next_id++;
            fold->segment = nb - 3;
            fold->branch = br.label;
            br.bifurcations.push_back(std::move(*fold));
          }
          fold_stop = cs.stop_on_fold;
        }
      }
    }
    if (fold_stop) {
      br.termination = Termination::fold;
      break;
    }
    if (nb >= 4 && br.points.back().arclength - br.points.front().arclength >
                       4.0 * (br.points.back().arclength - br.points[nb - 2].arclength) &&
        detail::closes_on(br.points.front(), br.points[nb - 2], br.points.back())) {
      br.termination = Termination::closed;
      break;
    }
    const double mu = br.points.back().state.mu;
    if (mu < cs.mu_min || mu > cs.mu_max) {
      br.termination = Termination::window;
      break;
    }
  }
  return br;
}

/// Newton-solves a guess at fixed mu and traces from it.
inline Branch trace_branch(const ExtendedState& guess, const ContinuationSettings& cs, std::string label = {},
                           const NewtonSettings& ns = {}) {
  const Solution sol = newton_solve(guess, ns);
  if (!sol.converged()) {
    throw std::runtime_error(std::string("trace_branch: initial Newton solve failed (") + to_string(sol.status) + ")");
  }
  return trace_branch(make_point(sol.state, cs), std::nullopt, cs, std::move(label));
}

/// Starts an emerging branch from a seed: one corrector step on the hyperplane at distance
/// eps along the seed direction, then secant continuation away from the bifurcation.
inline Branch trace_from_seed(const BifurcationPoint& bif, const SwitchSeed& seed, double eps,
                              const ContinuationSettings& cs, std::string label = {}) {
  const ExtendedState& base = bif.state;
  Tangent t{seed.direction, 0.0};
  const double n = combined_norm(t.psi, 0.0);
  t.psi *= 1.0 / n;
  const double ds = eps * rms(base.psi) / n * combined_norm(seed.direction, 0.0);
  auto r = detail::correct(base, t, ds, base.psi, cs);
  if (!r.converged) throw std::runtime_error("trace_from_seed: corrector failed to reach the emerging branch");
  BranchPoint origin;
  origin.state = base;
  origin.arclength = 0.0;
  BranchPoint first = make_point(r.state, cs);
  first.arclength = combined_norm(r.state.psi - base.psi, r.state.mu - base.mu);
  first.newton_iterations = r.iterations;
  Branch br = trace_branch(first, tangent(origin, first), cs, std::move(label));
  br.parent = bif.id;
  return br;
}

}  // namespace glv
