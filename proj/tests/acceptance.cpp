// Acceptance suite: one line per criterion, "criterion N: PASS|FAIL title (details)".
// Usage: acceptance [N ...]   (no arguments runs all ten)

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "glv/continuation.hpp"
#include "glv/linalg.hpp"
#include "glv/newton.hpp"
#include "glv/postproc.hpp"
#include "glv/symmetry.hpp"

using namespace glv;

namespace {

class Report {
 public:
  void check(const std::string& what, bool ok, const std::string& detail = {}) {
    ok_ = ok_ && ok;
    std::cout << "    " << (ok ? "ok   " : "FAIL ") << what;
    if (!detail.empty()) std::cout << ": " << detail;
    std::cout << std::endl;
    if (!ok) failed_.push_back(what);
  }
  void near(const std::string& what, double value, double target, double tol) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%.6f (target %.4f, tolerance %.4g, off by %.4g)", value, target, tol,
                  std::abs(value - target));
    check(what, std::isfinite(value) && std::abs(value - target) <= tol, buf);
  }
  bool ok() const { return ok_; }
  std::string summary() const {
    if (ok_) return "all sub-checks passed";
    std::string s = "failed: ";
    for (std::size_t k = 0; k < failed_.size(); ++k) s += (k ? "; " : "") + failed_[k];
    return s;
  }

 private:
  bool ok_ = true;
  std::vector<std::string> failed_;
};

double max_abs(const OrderField& f) {
  double m = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) m = std::max(m, std::abs(f[k]));
  return m;
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

OrderField random_field(const Grid& g, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  OrderField f(g);
  for (std::size_t k = 0; k < f.size(); ++k) f[k] = Complex(nd(rng), nd(rng));
  return f;
}

// Realified J built column by column from apply_jacobian.
Matrix dense_jacobian(const OrderField& psi, const LinkField& links) {
  const Grid& g = psi.grid();
  const Eigen::Index n = 2 * static_cast<Eigen::Index>(g.size());
  Matrix a(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    Vector e = Vector::Zero(n);
    e(k) = 1.0;
    a.col(k) = to_vector(apply_jacobian(psi, to_field(e, g), links));
  }
  return a;
}

BranchPoint at_mu(const Branch& br, double mu) {
  return *std::min_element(br.points.begin(), br.points.end(), [&](const BranchPoint& a, const BranchPoint& b) {
    return std::abs(a.state.mu - mu) < std::abs(b.state.mu - mu);
  });
}

// Relative rms distance between two states after the best D4 image and global phase.
double orbit_distance(const OrderField& a, const OrderField& b) {
  double best = std::numeric_limits<double>::infinity();
  for (int s = 0; s < 2; ++s) {
    for (int r = 0; r < 4; ++r) {
      OrderField p = act(GroupElement{r, s, 0.0}, a);
      const Complex c = inner_complex(p, b);
      if (std::abs(c) > 0.0) p *= c / std::abs(c);
      best = std::min(best, rms(p - b) / rms(b));
    }
  }
  return best;
}

const BifurcationPoint* first_of(const Branch& br, std::function<bool(const BifurcationPoint&)> pred) {
  for (const auto& b : br.bifurcations) {
    if (pred(b)) return &b;
  }
  return nullptr;
}

bool crossing(const BifurcationPoint& b) { return b.type != BifurcationType::turning; }

void log_branch(const Branch& br) {
  std::cout << "    [" << br.label << "] " << br.points.size() << " points, mu " << br.points.front().state.mu << " .. "
            << br.points.back().state.mu << ", ends by " << to_string(br.termination);
  if (br.end_mu) std::cout << " at " << *br.end_mu;
  std::cout << std::endl;
  for (const auto& b : br.bifurcations) {
    std::cout << "      point " << b.id << ": mu*=" << b.mu << " " << to_string(b.type) << " x" << b.multiplicity << " "
              << to_string(b.isotropy.label) << std::endl;
  }
}

// ---------------------------------------------------------------------------

Report trivial_states() {
  Report rep;
  for (int n : {8, 16, 64}) {
    const Grid g(3.0, n);
    double zero = 0.0;
    for (double mu : {0.0, 0.5, 1.0, 2.0, 7.3}) zero = std::max(zero, max_abs(residual(OrderField(g), link_field(g, mu))));
    rep.check("residual(0; mu) = 0 at N=" + std::to_string(n), zero <= 1e-14, sci(zero));
    const double one = max_abs(residual(OrderField(g, 1.0), link_field(g, 0.0)));
    rep.check("residual(1; 0) = 0 at N=" + std::to_string(n), one <= 1e-14, sci(one));
    const double fe = free_energy(OrderField(g, 1.0));
    rep.check("free_energy(1) = -1 at N=" + std::to_string(n), std::abs(fe + 1.0) <= 1e-14, sci(fe + 1.0));
  }
  return rep;
}

Report operator_properties() {
  Report rep;
  std::mt19937_64 rng(2);
  for (int n : {8, 16}) {
    const Grid g(3.0, n);
    for (double mu : {0.0, 1.0}) {
      const std::string tag = " (N=" + std::to_string(n) + ", mu=" + std::to_string(static_cast<int>(mu)) + ")";
      const LinkField links = link_field(g, mu);
      const OrderField psi = random_field(g, rng);
      double worst = 0.0;
      for (int t = 0; t < 5; ++t) {
        const OrderField a = random_field(g, rng), b = random_field(g, rng);
        const OrderField ja = apply_jacobian(psi, a, links), jb = apply_jacobian(psi, b, links);
        const double lhs = inner_real(a, jb), rhs = inner_real(ja, b);
        worst = std::max(worst, std::abs(lhs - rhs) / (norm(a) * norm(jb) + norm(ja) * norm(b)));
      }
      rep.check("self-adjointness defect" + tag, worst <= 1e-12, sci(worst));

      const Matrix j = dense_jacobian(psi, links);
      const Matrix wj = realified_weights(g).asDiagonal() * j;
      const double asym = (wj - wj.transpose()).cwiseAbs().maxCoeff() / wj.cwiseAbs().maxCoeff();
      rep.check("dense weighted J symmetric" + tag, asym <= 1e-12, sci(asym));

      Eigen::EigenSolver<Matrix> es(j, false);
      const double imag = es.eigenvalues().imag().cwiseAbs().maxCoeff();
      const double scale = es.eigenvalues().cwiseAbs().maxCoeff();
      rep.check("spectrum real" + tag, imag <= 1e-10 * scale, "max |Im| / max |lambda| = " + sci(imag / scale));
    }
  }
  return rep;
}

Report gauge_covariance() {
  Report rep;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ud(-std::numbers::pi, std::numbers::pi);
  for (double d : {3.0, 5.5}) {
    const Grid g(d, 16);
    for (double mu : {0.3, 1.7}) {
      const LinkField links = link_field(g, mu);
      const OrderField psi = random_field(g, rng);
      std::vector<double> chi(g.size());
      for (auto& c : chi) c = ud(rng);
      OrderField tpsi = psi;
      for (std::size_t k = 0; k < tpsi.size(); ++k) tpsi[k] *= std::polar(1.0, chi[k]);
      const OrderField r = residual(psi, links), tr = residual(tpsi, gauge_transform(links, chi));
      double worst = 0.0;
      for (std::size_t k = 0; k < r.size(); ++k) worst = std::max(worst, std::abs(std::abs(r[k]) - std::abs(tr[k])));
      worst /= max_abs(r);
      rep.check("node-wise |residual| invariant (d=" + std::to_string(d).substr(0, 3) + ")", worst <= 1e-12, sci(worst));
    }
  }
  return rep;
}

Report equivariance() {
  Report rep;
  std::mt19937_64 rng(4);
  const Grid g(3.0, 16);
  struct Named {
    const char* name;
    GroupElement el;
  };
  for (double mu : {0.0, 0.8, 1.9}) {
    const LinkField links = link_field(g, mu);
    for (const Named& n : {Named{"rho", rho()}, Named{"sigma", sigma()}, Named{"theta", phase_shift(0.77)}}) {
      double worst = 0.0;
      for (int t = 0; t < 3; ++t) worst = std::max(worst, equivariance_residual(n.el, random_field(g, rng), links));
      rep.check(std::string("equivariance under ") + n.name + " at mu=" + std::to_string(mu).substr(0, 3),
                worst <= 1e-12, sci(worst));
    }
  }
  // the extended system with psi0 = 1
  const ReferenceState ref{OrderField(g, 1.0)};
  for (const GroupElement& el : {rho(), sigma()}) {
    const OrderField psi = random_field(g, rng);
    const ExtendedState s{psi, 0.21, 1.2};
    const ExtendedState gs{act(el, psi), el.s ? -0.21 : 0.21, 1.2};
    const ExtendedVector r = residual_extended(s, ref), gr = residual_extended(gs, ref);
    const double field = norm(act(el, r.field) - gr.field) / norm(r.field);
    const double scalar = std::abs(gr.scalar - (el.s ? -r.scalar : r.scalar)) / std::max(1.0, std::abs(r.scalar));
    rep.check(std::string("extended system commutes with ") + (el.s ? "sigma" : "rho"),
              std::max(field, scalar) <= 1e-12, sci(std::max(field, scalar)));
  }
  return rep;
}

Report phase_mode() {
  Report rep;
  const Grid g(3.0, 12);
  const double mu = 0.5;
  const LinkField links = link_field(g, mu);
  const Solution sol = newton_solve(ExtendedState{OrderField(g, 1.0), 0.0, mu});
  rep.check("Newton with phase condition converges", sol.converged(), to_string(sol.status));
  if (!sol.converged()) return rep;
  rep.check("in at most 10 iterations", sol.iterations <= 10, std::to_string(sol.iterations) + " iterations");
  std::string hist;
  for (double h : sol.history) hist += sci(h) + " ";
  rep.check("quadratic tail", has_quadratic_tail(sol.history), hist);

  const Matrix j = dense_jacobian(sol.state.psi, links);
  const Vector sj = singular_values(j);
  const double rj = sj(sj.size() - 1) / sj(0);
  rep.check("J singular: sigma_min <= 1e-10 sigma_max", rj <= 1e-10, sci(rj));

  BorderedJacobian bj{sol.state.psi, links, sol.state.eta, {phase_column(sol.state.psi)}, {phase_row(sol.reference.psi0)},
                      Matrix::Zero(1, 1)};
  const Vector sp = singular_values(dense_materialize(bj.op()));
  const double rp = sp(sp.size() - 1) / sp(0);
  rep.check("bordered J_p regular: sigma_min >= 1e-6 sigma_max", rp >= 1e-6, sci(rp));

  // plain Newton on the unbordered system: J degenerates along the phase orbit
  OrderField psi(g, 1.0);
  std::mt19937_64 rng(5);
  psi.axpy(0.05, random_field(g, rng));
  // iterate down to the round-off floor, as a converging solve would
  double worst = 0.0, last = std::numeric_limits<double>::infinity();
  std::string conds;
  for (int it = 0; it < 20; ++it) {
    const OrderField r = residual(psi, links);
    if (!(norm(r) < 0.5 * last)) break;
    last = norm(r);
    const Matrix jk = dense_jacobian(psi, links);
    const Vector s = singular_values(jk);
    const double cond = s(0) / s(s.size() - 1);
    worst = std::max(worst, cond);
    conds += sci(cond) + " ";
    const Vector step = jk.fullPivLu().solve(-to_vector(r));
    psi.axpy(1.0, to_field(step, g));
  }
  rep.check("without phase condition cond(J) grows past 1e10", worst >= 1e10, conds);
  return rep;
}

Report bordering_lemma() {
  Report rep;
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd;
  std::uniform_int_distribution<int> kd(1, 3), nsize(4, 9), mode(0, 3);
  const int trials = 2000;
  int counter = 0, oracle_mismatch = 0, both_cases = 0, reduced = 0;
  int by_k[4] = {0, 0, 0, 0};
  auto rank = [](const Matrix& m) {
    Eigen::FullPivLU<Matrix> lu(m);
    lu.setThreshold(1e-9);
    return static_cast<int>(lu.rank());
  };
  for (int t = 0; t < trials; ++t) {
    const int n = nsize(rng), k = std::min(kd(rng), n - 1);
    Matrix a(n, n - k), c(n - k, n);
    for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = nd(rng);
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = nd(rng);
    const Matrix L = a * c;
    Vector b(n), f(n), y(n);
    for (int i = 0; i < n; ++i) {
      b(i) = nd(rng);
      f(i) = nd(rng);
      y(i) = nd(rng);
    }
    const int m = mode(rng);
    if (m & 1) b = L * b;
    if (m & 2) f = L.transpose() * y;
    const double d = nd(rng);

    // truth from LU ranks
    Matrix big(n + 1, n + 1);
    big << L, b, f.transpose(), d;
    Matrix aug(n, n + 1);
    aug << L, b;
    const int rl = rank(L);
    const int kk = n - rl, kt = n + 1 - rank(big);
    const bool outside = rank(aug) > rl;
    const Matrix ker = Eigen::FullPivLU<Matrix>(L).setThreshold(1e-9).kernel();
    const bool f_on_ker = (ker.transpose() * f).cwiseAbs().maxCoeff() > 1e-9 * f.norm() * ker.norm();
    const bool lemma = (kt < kk) == (outside && f_on_ker);
    counter += lemma ? 0 : 1;
    by_k[std::min(kk, 3)] += 1;
    reduced += kt < kk ? 1 : 0;
    both_cases += outside && f_on_ker ? 1 : 0;

    const BorderedNullity o = bordered_nullity(L, b, f, d);
    oracle_mismatch += (o.k == kk && o.k_tilde == kt && o.predicate == (outside && f_on_ker) && o.consistent) ? 0 : 1;
  }
  rep.check("instances", trials >= 1000,
            std::to_string(trials) + " (nullity 1/2/3: " + std::to_string(by_k[1]) + "/" + std::to_string(by_k[2]) + "/" +
                std::to_string(by_k[3]) + ", nullity reduced in " + std::to_string(reduced) + ")");
  rep.check("every prescribed nullity occurs", by_k[1] > 0 && by_k[2] > 0 && by_k[3] > 0 && by_k[0] == 0);
  rep.check("both sides of the equivalence exercised", both_cases > 0 && both_cases < trials);
  rep.check("counterexamples", counter == 0, std::to_string(counter));
  rep.check("library oracle agrees", oracle_mismatch == 0, std::to_string(oracle_mismatch) + " mismatches");
  return rep;
}

Report small_diagram() {
  Report rep;
  const Grid g(3.0, 64);
  ContinuationSettings cs;
  cs.mu_min = -0.01;
  cs.mu_max = 2.0;
  cs.ds_max = 0.08;
  const Branch A = trace_branch(ExtendedState{OrderField(g, 1.0), 0.0, 0.0}, cs, "A");
  log_branch(A);
  const BifurcationPoint* p1 = first_of(A, crossing);
  rep.check("point 1 found on A", p1 != nullptr);
  if (!p1) return rep;
  rep.near("point 1 mu*", p1->mu, 1.646, 0.02 * 1.646);
  rep.check("point 1 multiplicity 2", p1->multiplicity == 2, std::to_string(p1->multiplicity));
  bool stable_before = true, d4 = true;
  for (const auto& p : A.points) {
    if (p.arclength < p1->arclength) stable_before = stable_before && p.stability.stable;
    d4 = d4 && p.isotropy.label == IsotropyLabel::d4;
  }
  rep.check("A stable below point 1", stable_before);
  rep.check("A keeps full D4 symmetry", d4);
  rep.check("A ends on the normal state", A.termination == Termination::trivial_state && A.end_mu.has_value(),
            to_string(A.termination));
  rep.near("A endpoint", A.end_mu.value_or(NAN), 1.89, 0.03 * 1.89);

  // F: one centred vortex
  ContinuationSettings fs = cs;
  fs.mu_min = 0.5;
  fs.mu_max = 2.6;
  OrderField vortex(g);
  for (int j = -g.half(); j <= g.half(); ++j) {
    for (int i = -g.half(); i <= g.half(); ++i) {
      const Complex z(g.x(i), g.y(j));
      vortex(i, j) = z / std::sqrt(std::norm(z) + 0.25);
    }
  }
  const Solution fsol = newton_solve(ExtendedState{vortex, 0.0, 1.5});
  rep.check("F solved at mu=1.5", fsol.converged());
  if (!fsol.converged()) return rep;
  const BranchPoint f0 = make_point(fsol.state, fs);
  rep.check("F has a centred vortex", f0.total_vorticity == 1 && f0.isotropy.label == IsotropyLabel::d4);
  fs.direction = +1;
  const Branch Fup = trace_branch(f0, std::nullopt, fs, "F");
  fs.direction = -1;
  const Branch Fdown = trace_branch(f0, std::nullopt, fs, "F");
  log_branch(Fup);
  log_branch(Fdown);
  rep.check("F ends on the normal state", Fup.termination == Termination::trivial_state && Fup.end_mu.has_value());
  rep.near("F endpoint", Fup.end_mu.value_or(NAN), 2.30, 0.03 * 2.30);
  const BifurcationPoint* p6 = first_of(Fdown, crossing);
  rep.check("point 6 found on F", p6 != nullptr);
  if (!p6) return rep;
  rep.near("point 6 mu*", p6->mu, 1.175, 0.02 * 1.175);
  rep.check("point 6 multiplicity 2", p6->multiplicity == 2, std::to_string(p6->multiplicity));

  // C and G from point 1
  const auto seeds = switch_branch(*p1);
  for (IsotropyLabel fam : {IsotropyLabel::mirror_mid, IsotropyLabel::mirror_diag}) {
    const char* name = fam == IsotropyLabel::mirror_mid ? "C" : "G";
    const auto it = std::find_if(seeds.begin(), seeds.end(), [&](const SwitchSeed& s) { return s.label == fam && s.sign > 0; });
    rep.check(std::string("branching lemma offers ") + name + " " + std::string(to_string(fam)), it != seeds.end());
    if (it == seeds.end()) continue;
    ContinuationSettings bs = cs;
    bs.mu_min = 0.5;
    bs.stop_on_fold = true;
    const Branch br = trace_from_seed(*p1, *it, 0.05, bs, name);
    log_branch(br);
    bool labels = true;
    for (const auto& p : br.points) labels = labels && p.isotropy.label == fam;
    rep.check(std::string(name) + " isotropy " + std::string(to_string(fam)) + " along the branch", labels);
    bool below = true;
    for (const auto& p : br.points) below = below && p.state.mu <= p1->mu + 1e-3;
    rep.check(std::string(name) + " runs down from point 1", below);
    const BifurcationPoint* fold = first_of(br, [](const BifurcationPoint& b) { return b.type == BifurcationType::turning; });
    rep.check(std::string(name) + " reaches an end fold", fold != nullptr && br.termination == Termination::fold);
    if (!fold) continue;
    rep.near(std::string(name) + " joins point 6 (mu)", fold->mu, p6->mu, 0.02);
    const double dist = orbit_distance(fold->state.psi, p6->state.psi);
    rep.check(std::string(name) + " joins point 6 (state)", dist <= 0.1, "relative rms distance " + sci(dist));
    rep.check(std::string(name) + " carries one vortex", br.points.back().total_vorticity == 1);
  }
  return rep;
}

Report zone_one() {
  Report rep;
  const Grid g(5.5, 110);
  ContinuationSettings cs;
  cs.mu_min = 0.2;
  cs.mu_max = 1.0;
  cs.ds_max = 0.08;
  const Branch A = trace_branch(ExtendedState{OrderField(g, 1.0), 0.0, 0.6}, cs, "A");
  log_branch(A);
  const BifurcationPoint* p1 = first_of(A, crossing);
  rep.check("point 1 found on A", p1 != nullptr);
  if (!p1) return rep;
  rep.near("point 1 mu*", p1->mu, 0.70, 0.05 * 0.70);
  rep.check("point 1 is a simple eigenvalue", p1->multiplicity == 1, std::to_string(p1->multiplicity));

  const auto seeds = switch_branch(*p1);
  rep.check("a single family emerges", !seeds.empty() && std::all_of(seeds.begin(), seeds.end(), [&](const SwitchSeed& s) {
                                          return s.label == seeds.front().label;
                                        }));
  if (!seeds.empty()) {
    rep.check("family isotropy <rho2,sigma>", seeds.front().label == IsotropyLabel::d2_mid,
              std::string(to_string(seeds.front().label)));
    const Branch B = trace_from_seed(*p1, seeds.front(), 0.05, cs, "B");
    log_branch(B);
    int good = 0;
    for (const auto& p : B.points) good += p.isotropy.label == IsotropyLabel::d2_mid ? 1 : 0;
    rep.check("B isotropy <rho2,sigma>", good == static_cast<int>(B.points.size()),
              std::to_string(good) + "/" + std::to_string(B.points.size()) + " points");
  }

  // D: giant vortex of winding two
  OrderField giant(g);
  for (int j = -g.half(); j <= g.half(); ++j) {
    for (int i = -g.half(); i <= g.half(); ++i) {
      const Complex z(g.x(i), g.y(j));
      giant(i, j) = z * z / (std::norm(z) + 1.0);
    }
  }
  const Solution dsol = newton_solve(ExtendedState{giant, 0.0, 0.8});
  rep.check("D solved at mu=0.8", dsol.converged());
  if (dsol.converged()) {
    const auto census = vortex_census(dsol.state.psi);
    const bool centred = census.size() == 1 && census[0].winding == 2 && std::abs(census[0].x) < g.h() &&
                         std::abs(census[0].y) < g.h();
    rep.check("D is a giant vortex of winding 2 at the centre", centred,
              std::to_string(census.size()) + " vortex records");
    const int w = winding_number(dsol.state.psi, rectangle_loop(-10, -10, 10, 10));
    rep.check("winding 2 around the centre", w == 2, std::to_string(w));
    ContinuationSettings ds = cs;
    ds.direction = -1;
    const Branch D = trace_branch(make_point(dsol.state, ds), std::nullopt, ds, "D");
    log_branch(D);
    rep.check("D stable at mu=0.8", D.points.front().stability.stable);
    const BifurcationPoint* p3 = first_of(D, crossing);
    rep.check("point 3 found on D", p3 != nullptr);
    if (p3) rep.near("point 3 mu*", p3->mu, 0.64, 0.05 * 0.64);
  }

  // F: single centred vortex, downward
  OrderField vortex(g);
  for (int j = -g.half(); j <= g.half(); ++j) {
    for (int i = -g.half(); i <= g.half(); ++i) {
      const Complex z(g.x(i), g.y(j));
      vortex(i, j) = z / std::sqrt(std::norm(z) + 1.0);
    }
  }
  const Solution fsol = newton_solve(ExtendedState{vortex, 0.0, 0.6});
  rep.check("F solved at mu=0.6", fsol.converged());
  if (fsol.converged()) {
    ContinuationSettings fs = cs;
    fs.mu_min = 0.02;
    fs.direction = -1;
    const Branch F = trace_branch(make_point(fsol.state, fs), std::nullopt, fs, "F");
    log_branch(F);
    const BifurcationPoint* p6 = first_of(F, [](const BifurcationPoint& b) { return crossing(b) && b.multiplicity == 2; });
    rep.check("point 6 found on F", p6 != nullptr);
    if (p6) rep.near("point 6 mu*", p6->mu, 0.25, 0.03);
  }
  return rep;
}

Report zone_two() {
  Report rep;
  const Grid g(5.5, 110);
  ContinuationSettings cs;
  cs.mu_min = 0.95;
  cs.mu_max = 1.8;
  cs.ds_max = 0.08;
  const Branch A = trace_branch(ExtendedState{OrderField(g, 1.0), 0.0, 1.0}, cs, "A");
  log_branch(A);
  rep.check("A unstable at mu=1.0", !A.points.front().stability.stable);

  // restabilization: first crossing after which A is stable
  const BifurcationPoint* restab = nullptr;
  const BifurcationPoint* loss = nullptr;
  for (std::size_t k = 0; k < A.bifurcations.size(); ++k) {
    const BifurcationPoint& b = A.bifurcations[k];
    if (!crossing(b)) continue;
    // several crossings may share a segment; the stability at its end belongs to the last one
    if (k + 1 < A.bifurcations.size() && A.bifurcations[k + 1].segment == b.segment) continue;
    const BranchPoint& after = A.points.at(std::min(b.segment + 1, A.points.size() - 1));
    if (!restab && after.stability.stable) {
      restab = &b;
    } else if (restab && !loss && !after.stability.stable) {
      loss = &b;
    }
  }
  rep.check("A restabilizes", restab != nullptr);
  if (restab) rep.near("restabilization (point 9) mu*", restab->mu, 1.15, 0.05 * 1.15);
  const BifurcationPoint* p8 = first_of(A, [](const BifurcationPoint& b) { return crossing(b) && b.multiplicity == 1; });
  rep.check("point 8 found", p8 != nullptr);
  if (p8) rep.near("point 8 mu*", p8->mu, 1.14, 0.05 * 1.14);
  if (restab && p8) rep.check("point 8 precedes point 9", p8->mu < restab->mu);
  rep.check("A loses stability again (point 13)", loss != nullptr);
  if (loss) {
    rep.near("point 13 mu*", loss->mu, 1.50, 0.05 * 1.50);
    rep.check("point 13 multiplicity 2", loss->multiplicity == 2, std::to_string(loss->multiplicity));
  }
  if (restab) {
    const BranchPoint four = at_mu(A, restab->mu + 0.05);
    int on_diag = 0;
    for (const auto& v : vortex_census(four.state.psi)) on_diag += std::abs(std::abs(v.x) - std::abs(v.y)) < g.h() ? 1 : 0;
    rep.check("four vortices on the diagonals after restabilization", on_diag == 4, std::to_string(on_diag));
  }

  // M: winding three concentrated at the centre. L leaves point 9 in the <sigma> family
  // and meets M at point 10, where M loses stability.
  OrderField three(g);
  for (int j = -g.half(); j <= g.half(); ++j) {
    for (int i = -g.half(); i <= g.half(); ++i) {
      const Complex z(g.x(i), g.y(j));
      three(i, j) = z * z * z / std::pow(std::norm(z) + 1.44, 1.5);
    }
  }
  const Solution msol = newton_solve(ExtendedState{three, 0.0, 1.46});
  rep.check("M solved at mu=1.46", msol.converged());
  if (!msol.converged()) return rep;
  struct Census {
    int plus = 0, minus = 0;
    bool centre_anti = false;
    std::optional<int> total;
    bool five() const { return plus == 4 && minus == 1 && centre_anti && total && *total == 3; }
    std::string str() const {
      return "+" + std::to_string(plus) + " -" + std::to_string(minus) + " total " +
             (total ? std::to_string(*total) : "n/a") + (centre_anti ? ", antivortex at the centre" : "");
    }
  };
  auto census_of = [&](const OrderField& psi) {
    Census c;
    for (const auto& v : vortex_census(psi)) {
      (v.winding > 0 ? c.plus : c.minus) += std::abs(v.winding);
      c.centre_anti = c.centre_anti || (std::abs(v.x) < g.h() && std::abs(v.y) < g.h() && v.winding == -1);
    }
    c.total = total_vorticity(psi);
    return c;
  };
  const Census mc = census_of(msol.state.psi);
  rep.check("M: four +1 vortices around a central -1, total 3", mc.five(), mc.str());

  ContinuationSettings ms = cs;
  ms.mu_min = 1.45;
  ms.mu_max = 1.53;
  ms.ds_max = 0.02;
  const Branch M = trace_branch(make_point(msol.state, ms), std::nullopt, ms, "M");
  log_branch(M);
  const BifurcationPoint* p10 = first_of(M, [&](const BifurcationPoint& b) {
    return crossing(b) && b.multiplicity == 2 && b.segment + 1 < M.points.size() &&
           M.points[b.segment].stability.stable && !M.points[b.segment + 1].stability.stable;
  });
  rep.check("point 10 found (M loses stability at a double crossing)", p10 != nullptr);
  if (!p10 || !restab) return rep;
  std::cout << "    point 10 at mu* = " << p10->mu << std::endl;

  const auto seeds = switch_branch(*restab);
  const auto it = std::find_if(seeds.begin(), seeds.end(),
                               [](const SwitchSeed& s) { return s.label == IsotropyLabel::mirror_mid && s.sign > 0; });
  rep.check("branching lemma offers L <sigma> at point 9", it != seeds.end());
  if (it == seeds.end()) return rep;
  ContinuationSettings ls = cs;
  ls.mu_min = 1.0;
  ls.mu_max = 1.6;
  ls.ds_max = 0.06;
  ls.max_points = 20;
  const Branch L = trace_from_seed(*restab, *it, 0.05, ls, "L");
  log_branch(L);
  const BifurcationPoint* junction = first_of(L, [&](const BifurcationPoint& b) {
    return std::abs(b.mu - p10->mu) <= 0.01 && orbit_distance(b.state.psi, p10->state.psi) <= 0.05;
  });
  rep.check("L joins M at point 10", junction != nullptr);
  if (!junction) return rep;
  const Census jc = census_of(junction->state.psi);
  rep.check("L census at point 10: four +1 vortices and one central -1, total 3", jc.five(),
            "mu=" + std::to_string(junction->mu) + " " + jc.str());
  int five = 0, seen = 0;
  std::string first_other;
  for (std::size_t k = 0; k <= junction->segment && k < L.points.size(); ++k) {
    const Census c = census_of(L.points[k].state.psi);
    ++seen;
    if (c.five()) {
      ++five;
    } else if (first_other.empty()) {
      first_other = ", e.g. mu=" + std::to_string(L.points[k].state.mu) + " " + c.str();
    }
  }
  rep.check("L census between points 9 and 10: four +1 vortices and one central -1, total 3", five == seen,
            std::to_string(five) + " of " + std::to_string(seen) + " points" + first_other);
  return rep;
}

// Observed order of mu*(h) = mu0 + C h^p from three grids.
double observed_order(double h1, double h2, double h3, double m1, double m2, double m3) {
  const double target = (m1 - m2) / (m2 - m3);
  auto f = [&](double p) { return (std::pow(h1, p) - std::pow(h2, p)) / (std::pow(h2, p) - std::pow(h3, p)) - target; };
  double lo = 0.1, hi = 8.0;
  if (f(lo) * f(hi) > 0.0) return NAN;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(lo) * f(mid) <= 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

Report grid_convergence() {
  Report rep;
  const std::vector<int> ns = {32, 48, 64, 96};
  std::vector<double> mus, hs;
  for (int n : ns) {
    const Grid g(3.0, n);
    ContinuationSettings cs;
    cs.mu_min = 1.4;
    cs.mu_max = 1.75;
    cs.ds_max = 0.05;
    cs.loc_tol_lambda = 1e-11;
    cs.loc_max_probes = 80;
    const Branch A = trace_branch(ExtendedState{OrderField(g, 1.0), 0.0, 1.5}, cs, "A");
    const BifurcationPoint* p1 = first_of(A, crossing);
    rep.check("point 1 at N=" + std::to_string(n), p1 != nullptr && std::abs(p1->critical_value) <= 1e-9,
              p1 ? "mu*=" + std::to_string(p1->mu) + ", |lambda|=" + sci(std::abs(p1->critical_value)) : "missing");
    if (!p1) return rep;
    mus.push_back(p1->mu);
    hs.push_back(g.h());
  }
  const double pa = observed_order(hs[0], hs[1], hs[2], mus[0], mus[1], mus[2]);
  const double pb = observed_order(hs[1], hs[2], hs[3], mus[1], mus[2], mus[3]);
  char buf[120];
  std::snprintf(buf, sizeof buf, "p = %.3f (N=32,48,64), %.3f (N=48,64,96)", pa, pb);
  rep.check("monotone convergence", (mus[0] - mus[1]) * (mus[1] - mus[2]) > 0.0 && (mus[1] - mus[2]) * (mus[2] - mus[3]) > 0.0);
  rep.check("observed order >= 2", pa >= 2.0 && pb >= 2.0, buf);
  return rep;
}

struct Criterion {
  const char* title;
  std::function<Report()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all = {
      {"trivial states", trivial_states},
      {"operator properties", operator_properties},
      {"gauge covariance", gauge_covariance},
      {"equivariance", equivariance},
      {"phase-mode nullspace and regularization", phase_mode},
      {"bordering lemma", bordering_lemma},
      {"d=3 bifurcation diagram", small_diagram},
      {"d=5.5 zone I", zone_one},
      {"d=5.5 zone II", zone_two},
      {"grid convergence of point 1", grid_convergence},
  };
  std::vector<int> pick;
  for (int k = 1; k < argc; ++k) {
    const int c = std::atoi(argv[k]);
    if (c < 1 || c > static_cast<int>(all.size())) {
      std::cerr << "usage: acceptance [1-10 ...]\n";
      return 2;
    }
    pick.push_back(c);
  }
  if (pick.empty()) {
    for (int c = 1; c <= static_cast<int>(all.size()); ++c) pick.push_back(c);
  }
  bool ok = true;
  for (int c : pick) {
    const auto t0 = std::chrono::steady_clock::now();
    std::cout << "criterion " << c << " (" << all[c - 1].title << ")" << std::endl;
    Report rep;
    try {
      rep = all[c - 1].run();
    } catch (const std::exception& e) {
      rep.check("no exception", false, e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %d: %s %s (%s; %.1f s)\n", c, rep.ok() ? "PASS" : "FAIL", all[c - 1].title,
                rep.summary().c_str(), secs);
    std::fflush(stdout);
    ok = ok && rep.ok();
  }
  return ok ? 0 : 1;
}
