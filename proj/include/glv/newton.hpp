#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "glv/bordered.hpp"
#include "glv/glop.hpp"
#include "glv/linalg.hpp"

namespace glv {

enum class ReferencePolicy {
  fixed,      // keep the given psi0 for the whole solve
  update,     // psi0 := current iterate before every step
  automatic,  // fixed, unless |<psi0, psi>| is tiny for the initial guess
};

struct NewtonSettings {
  double tol = 1e-10;  // on the weighted norm of the extended residual
  int max_iterations = 30;
  ReferencePolicy policy = ReferencePolicy::automatic;
  double linear_tol = 1e-10;
  int linear_maxit = 400;
  double divergence_growth = 1e4;
  int max_halvings = 0;
  double policy_switch_threshold = 1e-6;
  double trivial_norm = 1e-4;  // rms amplitude below which psi counts as the normal state
  double shift = kDefaultJacobianShift;
};

enum class NewtonStatus { converged, max_iterations, diverged, linear_failure, trivial_state };

inline const char* to_string(NewtonStatus s) {
  switch (s) {
    case NewtonStatus::converged: return "converged";
    case NewtonStatus::max_iterations: return "max_iterations";
    case NewtonStatus::diverged: return "diverged";
    case NewtonStatus::linear_failure: return "linear_failure";
    case NewtonStatus::trivial_state: return "trivial-state convergence";
  }
  return "unknown";
}

struct Solution {
  ExtendedState state;
  ReferenceState reference;
  double residual_norm = 0.0;
  double unextended_residual_norm = 0.0;
  int iterations = 0;
  std::vector<double> history;
  NewtonStatus status = NewtonStatus::max_iterations;
  bool reference_updated = false;
  int linear_iterations = 0;

  bool converged() const { return status == NewtonStatus::converged; }
};

inline ReferenceState update_reference(const OrderField& iterate) { return ReferenceState{iterate}; }

inline bool reference_degenerate(const ReferenceState& ref, const OrderField& psi, double threshold) {
  const double denom = norm(ref.psi0) * norm(psi);
  return denom == 0.0 || std::abs(inner_complex(ref.psi0, psi)) < threshold * denom;
}

inline double extended_norm(const ExtendedVector& v) {
  return std::sqrt(inner_real(v.field, v.field) + v.scalar * v.scalar);
}

/// True when some step of the residual history shows convergence order >= 1.6.
inline bool has_quadratic_tail(const std::vector<double>& history, double floor = 1e-14) {
  for (std::size_t k = 1; k + 1 < history.size(); ++k) {
    const double a = history[k - 1], b = history[k], c = history[k + 1];
    if (!(a > b && b > c) || c <= floor || a >= 1.0) continue;
    const double order = std::log(c / b) / std::log(b / a);
    if (order >= 1.6) return true;
  }
  return false;
}

/// Newton iteration on the phase-condition-extended system at fixed mu.
inline Solution newton_solve(const ExtendedState& guess, const ReferenceState& reference,
                             const NewtonSettings& settings = {}) {
  if (!guess.psi.all_finite() || !std::isfinite(guess.eta) || !std::isfinite(guess.mu)) {
    throw std::invalid_argument("newton_solve: non-finite initial guess");
  }
  Solution sol;
  sol.state = guess;
  sol.reference = reference;
  const Grid& grid = guess.psi.grid();
  const LinkField links = link_field(grid, guess.mu);

  bool update = settings.policy == ReferencePolicy::update;
  if (settings.policy == ReferencePolicy::automatic &&
      reference_degenerate(reference, guess.psi, settings.policy_switch_threshold)) {
    update = true;
  }
  sol.reference_updated = update;

  double first = -1.0;
  for (int it = 0;; ++it) {
    if (update) sol.reference = update_reference(sol.state.psi);
    ExtendedVector f = residual_extended(sol.state, sol.reference, links);
    const double r = extended_norm(f);
    sol.history.push_back(r);
    sol.residual_norm = r;
    sol.iterations = it;
    if (first < 0.0) first = r;
    if (!std::isfinite(r) || r > settings.divergence_growth * std::max(first, settings.tol)) {
      sol.status = NewtonStatus::diverged;
      break;
    }
    if (r <= settings.tol) {
      sol.status = rms(sol.state.psi) < settings.trivial_norm ? NewtonStatus::trivial_state : NewtonStatus::converged;
      break;
    }
    if (it >= settings.max_iterations) {
      sol.status = NewtonStatus::max_iterations;
      break;
    }
    if (rms(sol.state.psi) < settings.trivial_norm) {
      sol.status = NewtonStatus::trivial_state;
      break;
    }

    BorderedJacobian jac{sol.state.psi, links, sol.state.eta, {phase_column(sol.state.psi)},
                         {phase_row(sol.reference.psi0)}, Matrix::Zero(1, 1)};
    auto factor = std::make_shared<const ShiftedJacobianFactor>(sol.state.psi, links, settings.shift);
    const LinearOperator op = jac.op();
    Vector rhs = to_vector(f.field, 1);
    rhs(rhs.size() - 1) = f.scalar;
    rhs = -rhs;
    auto [delta, rep] = solve_general(op, rhs, settings.linear_tol, settings.linear_maxit, jac.preconditioner(factor));
    sol.linear_iterations += rep.iterations;
    if (!delta.allFinite() || rep.relative_residual > 1e-2) {
      sol.status = NewtonStatus::linear_failure;
      break;
    }
    OrderField dpsi = to_field(delta, grid);
    const double deta = delta(delta.size() - 1);

    double step = 1.0;
    ExtendedState trial = sol.state;
    trial.psi.axpy(step, dpsi);
    trial.eta += step * deta;
    for (int halving = 0; halving < settings.max_halvings; ++halving) {
      const ReferenceState& tref = update ? sol.reference : sol.reference;
      const double rt = extended_norm(residual_extended(trial, tref, links));
      if (std::isfinite(rt) && rt < r) break;
      step *= 0.5;
      trial = sol.state;
      trial.psi.axpy(step, dpsi);
      trial.eta += step * deta;
    }
    sol.state = std::move(trial);
  }
  sol.unextended_residual_norm = norm(residual(sol.state.psi, links));
  return sol;
}

/// Newton with the default constant reference psi0 = 1.
inline Solution newton_solve(const ExtendedState& guess, const NewtonSettings& settings = {}) {
  return newton_solve(guess, ReferenceState{OrderField(guess.psi.grid(), 1.0)}, settings);
}

}  // namespace glv
