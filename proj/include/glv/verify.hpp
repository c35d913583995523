#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "glv/linalg.hpp"
#include "glv/newton.hpp"
#include "glv/postproc.hpp"
#include "glv/symmetry.hpp"

namespace glv::verify {

struct Check {
  std::string name;
  bool passed = false;
  double value = 0.0;  // the measured defect
  double limit = 0.0;
};

struct VerifySettings {
  double d = 3.0;
  int n = 8;
  int lemma_trials = 1000;
  std::uint64_t seed = 0;
};

namespace detail {

inline OrderField random_field(const Grid& g, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> nd(0.0, scale);
  OrderField f(g);
  for (std::size_t k = 0; k < f.size(); ++k) f[k] = Complex(nd(rng), nd(rng));
  return f;
}

inline double relative(double a, double b) { return a / std::max(b, 1e-300); }

}  // namespace detail

/// Structural properties of the discretization on a small grid: trivial states,
/// self-adjointness, equivariance, gauge covariance, the phase nullspace and the
/// bordering lemma. Each check reports its worst measured defect.
inline std::vector<Check> run_suite(const VerifySettings& vs) {
  const Grid g(vs.d, vs.n);
  std::mt19937_64 rng(vs.seed);
  std::vector<Check> out;
  auto add = [&](std::string name, double value, double limit) {
    out.push_back({std::move(name), std::isfinite(value) && value <= limit, value, limit});
  };

  {
    double worst = 0.0;
    for (double mu : {0.0, 0.7, 1.9}) worst = std::max(worst, norm(residual(OrderField(g), link_field(g, mu))));
    add("trivial state psi=0", worst, 1e-14);
    add("trivial state psi=1 at mu=0", norm(residual(OrderField(g, 1.0), link_field(g, 0.0))), 1e-14);
    add("free energy of psi=1", std::abs(free_energy(OrderField(g, 1.0)) + 1.0), 1e-14);
  }

  {
    double worst = 0.0;
    for (double mu : {0.0, 1.0}) {
      const LinkField links = link_field(g, mu);
      for (int rep = 0; rep < 4; ++rep) {
        const OrderField psi = detail::random_field(g, rng), a = detail::random_field(g, rng),
                         b = detail::random_field(g, rng);
        const double lhs = inner_real(a, apply_jacobian(psi, b, links));
        const double rhs = inner_real(apply_jacobian(psi, a, links), b);
        const double scale = norm(a) * norm(apply_jacobian(psi, b, links)) + norm(b) * norm(apply_jacobian(psi, a, links));
        worst = std::max(worst, detail::relative(std::abs(lhs - rhs), scale));
      }
    }
    add("jacobian self-adjoint under inner_real", worst, 1e-12);
  }

  {
    double worst = 0.0;
    const LinkField links = link_field(g, 0.8);
    for (int rep = 0; rep < 4; ++rep) {
      const OrderField phi = detail::random_field(g, rng);
      worst = std::max(worst, -inner_real(phi, kinetic_apply(phi, links)) / inner_real(phi, phi));
    }
    add("kinetic operator nonnegative", std::max(worst, 0.0), 1e-12);
  }

  {
    double worst = 0.0;
    const LinkField links = link_field(g, 1.3);
    for (const GroupElement& el : {rho(1), rho(3), sigma(), compose(rho(1), sigma()), phase_shift(0.9)}) {
      const OrderField psi = detail::random_field(g, rng);
      worst = std::max(worst, equivariance_residual(el, psi, links));
    }
    add("equivariance under rho, sigma, theta", worst, 1e-12);
  }

  {
    // with psi0 = 1 the phase condition is invariant under rho and sigma
    double worst = 0.0;
    const ReferenceState ref{OrderField(g, 1.0)};
    const double mu = 1.1;
    for (const GroupElement& el : {rho(1), sigma()}) {
      const OrderField psi = detail::random_field(g, rng);
      const ExtendedState s{psi, 0.3, mu}, gs{act(el, psi), el.s ? -0.3 : 0.3, mu};
      const ExtendedVector r = residual_extended(s, ref), gr = residual_extended(gs, ref);
      worst = std::max(worst, norm(act(el, r.field) - gr.field) / std::max(1.0, norm(r.field)));
      const double expect = el.s ? -r.scalar : r.scalar;
      worst = std::max(worst, std::abs(gr.scalar - expect) / std::max(1.0, std::abs(r.scalar)));
    }
    add("extended system equivariance with psi0=1", worst, 1e-12);
  }

  {
    const LinkField links = link_field(g, 0.9);
    const OrderField psi = detail::random_field(g, rng);
    std::uniform_real_distribution<double> ud(-3.0, 3.0);
    std::vector<double> chi(g.size());
    for (auto& c : chi) c = ud(rng);
    OrderField tpsi = psi;
    for (std::size_t k = 0; k < tpsi.size(); ++k) tpsi[k] *= std::polar(1.0, chi[k]);
    const OrderField r = residual(psi, links), tr = residual(tpsi, gauge_transform(links, chi));
    double worst = 0.0, scale = 0.0;
    for (std::size_t k = 0; k < r.size(); ++k) {
      worst = std::max(worst, std::abs(std::abs(r[k]) - std::abs(tr[k])));
      scale = std::max(scale, std::abs(r[k]));
    }
    add("gauge covariance of |residual|", detail::relative(worst, scale), 1e-12);
  }

  {
    const LinkField links = link_field(g, 0.5);
    const Solution sol = newton_solve(ExtendedState{OrderField(g, 1.0), 0.0, 0.5});
    double value = std::numeric_limits<double>::infinity();
    if (sol.converged()) {
      const OrderField& psi = sol.state.psi;
      value = norm(apply_jacobian(psi, times_i(psi), links)) / norm(psi);
    }
    add("phase mode in the kernel at a solution", value, 1e-10);
  }

  {
    const LinkField links = link_field(g, 0.6);
    const OrderField psi = detail::random_field(g, rng), phi = detail::random_field(g, rng);
    const OrderField jphi = apply_jacobian(psi, phi, links);
    double best = std::numeric_limits<double>::infinity();
    for (double eps : {1e-4, 1e-5, 1e-6}) {
      OrderField p = psi;
      p.axpy(eps, phi);
      OrderField m = psi;
      m.axpy(-eps, phi);
      const OrderField fd = (residual(p, links) - residual(m, links)) * (0.5 / eps);
      best = std::min(best, norm(fd - jphi) / norm(jphi));
    }
    add("jacobian matches central differences", best, 1e-7);
  }

  {
    // bordering lemma on random matrices with prescribed nullity
    int failures = 0;
    std::normal_distribution<double> nd;
    std::uniform_int_distribution<int> kd(1, 3), choice(0, 3);
    for (int t = 0; t < vs.lemma_trials; ++t) {
      const int n = 7, k = kd(rng);
      Matrix a(n, n - k), c(n - k, n);
      for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = nd(rng);
      for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = nd(rng);
      const Matrix L = a * c;
      Vector b(n), f(n);
      for (int i = 0; i < n; ++i) {
        b(i) = nd(rng);
        f(i) = nd(rng);
      }
      const int mode = choice(rng);
      if (mode & 1) b = L * b;  // inside the range
      if (mode & 2) {
        // annihilate the kernel: f in the row space
        Vector y(n);
        for (int i = 0; i < n; ++i) y(i) = nd(rng);
        f = L.transpose() * y;
      }
      const auto r = bordered_nullity(L, b, f, nd(rng));
      failures += r.consistent ? 0 : 1;
    }
    add("bordering lemma counterexamples", failures, 0.0);
  }
  return out;
}

}  // namespace glv::verify
