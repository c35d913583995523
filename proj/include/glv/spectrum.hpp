#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "glv/bordered.hpp"
#include "glv/glop.hpp"
#include "glv/linalg.hpp"

namespace glv {

struct EigenPair {
  double value = 0.0;
  OrderField field;  // unit norm under inner_real
  double residual = 0.0;  // |J phi - lambda phi|
};

struct EigenSettings {
  int count = 6;  // wanted eigenpairs (algebraically smallest)
  double tol = 1e-8;
  double shift = kDefaultJacobianShift;
  int block = 3;  // block size; must exceed the largest expected multiplicity
  int max_basis = 600;
  int dense_max_n = 16;
  bool deflate_phase = true;
  std::uint64_t seed = 0x5eed;
};

struct Spectrum {
  std::vector<EigenPair> pairs;  // sorted ascending, phase mode excluded when deflated
  std::optional<EigenPair> phase_mode;
  bool converged = false;
  int operator_applications = 0;
};

namespace detail {

inline OrderField unit_phase_mode(const OrderField& psi) {
  OrderField u = times_i(psi);
  const double n = norm(u);
  if (n > 0.0) u *= 1.0 / n;
  return u;
}

// Deflate only where i psi really is a null direction (at solutions).
inline bool phase_mode_is_null(const OrderField& psi, const LinkField& links, double tol) {
  const double n = norm(psi);
  if (n == 0.0) return false;
  return norm(apply_jacobian(psi, times_i(psi), links)) <= tol * n;
}

inline EigenPair finish_pair(const OrderField& psi, const LinkField& links, OrderField field) {
  const double n = norm(field);
  field *= 1.0 / n;
  const OrderField jf = apply_jacobian(psi, field, links);
  EigenPair p;
  p.value = inner_real(field, jf);
  p.residual = norm(jf - p.value * field);
  p.field = std::move(field);
  return p;
}

inline Spectrum dense_spectrum(const OrderField& psi, const LinkField& links, const EigenSettings& s,
                               const std::optional<OrderField>& phase) {
  const Grid& grid = psi.grid();
  LinearOperator op;
  op.weights = realified_weights(grid);
  op.apply = [&](const Vector& x, Vector& y) { y = to_vector(apply_jacobian(psi, to_field(x, grid), links)); };
  const Vector sq = op.weights.cwiseSqrt();
  const Vector isq = sq.cwiseInverse();
  Matrix a = isq.asDiagonal() * dense_gram(op) * isq.asDiagonal();
  a = 0.5 * (a + a.transpose());
  Vector u;
  if (phase) {
    u = sq.asDiagonal() * to_vector(*phase);
    u.normalize();
    const Matrix p = Matrix::Identity(a.rows(), a.cols()) - u * u.transpose();
    a = p * a * p;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  Spectrum out;
  out.converged = es.info() == Eigen::Success;
  out.operator_applications = static_cast<int>(a.cols());
  Eigen::Index skip = -1;
  if (phase) {
    (es.eigenvectors().transpose() * u).cwiseAbs().maxCoeff(&skip);
  }
  for (Eigen::Index k = 0; k < es.eigenvalues().size() && static_cast<int>(out.pairs.size()) < s.count; ++k) {
    if (k == skip) continue;
    out.pairs.push_back(finish_pair(psi, links, to_field(isq.asDiagonal() * es.eigenvectors().col(k), grid)));
  }
  return out;
}

}  // namespace detail

/// Algebraically smallest eigenpairs of the realified Jacobian at psi.
///
/// Block Lanczos on (J + shift)^{-1} under the weighted inner product with full
/// reorthogonalization; when the phase mode i psi lies in the kernel it is projected
/// out of the Krylov space and reported separately.
inline Spectrum deflated_eigenpairs(const OrderField& psi, const LinkField& links, const EigenSettings& s = {}) {
  const Grid& grid = psi.grid();
  if (s.count <= 0) throw std::invalid_argument("deflated_eigenpairs: count must be positive");

  std::optional<OrderField> phase;
  if (s.deflate_phase && detail::phase_mode_is_null(psi, links, 1e-6)) phase = detail::unit_phase_mode(psi);

  Spectrum out;
  if (grid.n() <= s.dense_max_n) {
    out = detail::dense_spectrum(psi, links, s, phase);
  } else {
    const ShiftedJacobianFactor factor(psi, links, s.shift);
    const Vector W = realified_weights(grid);
    const Eigen::Index n = W.size();
    const int block = std::max(1, s.block);
    const int max_basis = static_cast<int>(std::min<Eigen::Index>(s.max_basis, n - 1));
    Vector vphase;
    if (phase) vphase = to_vector(*phase);

    std::vector<Vector> V, TV;
    std::mt19937_64 rng(s.seed);
    std::normal_distribution<double> nd;

    auto orthogonalize = [&](Vector& x) -> bool {
      const double before = weighted_norm(W, x);
      for (int pass = 0; pass < 2; ++pass) {
        if (phase) x -= weighted_dot(W, vphase, x) * vphase;
        for (const auto& v : V) x -= weighted_dot(W, v, x) * v;
      }
      const double after = weighted_norm(W, x);
      if (!(after > 1e-10 * before) || after == 0.0) return false;
      x /= after;
      return true;
    };

    std::vector<Vector> current;
    for (int b = 0; b < block; ++b) {
      Vector x(n);
      for (Eigen::Index k = 0; k < n; ++k) x(k) = nd(rng);
      if (orthogonalize(x)) {
        V.push_back(x);
        current.push_back(x);
      }
    }

    Eigen::SelfAdjointEigenSolver<Matrix> es;
    Matrix H(0, 0);
    Vector y(n);
    while (true) {
      std::vector<Vector> next;
      for (const auto& v : current) {
        factor.solve(v, y);
        ++out.operator_applications;
        TV.push_back(y);
        next.push_back(y);
      }
      // Rayleigh-Ritz on span V with the stored images
      const int k = static_cast<int>(V.size());
      const int k_old = static_cast<int>(H.rows());
      H.conservativeResize(k, k);
      for (int i = k_old; i < k; ++i) {
        for (int j = 0; j <= i; ++j) {
          H(i, j) = H(j, i) = 0.5 * (weighted_dot(W, V[i], TV[j]) + weighted_dot(W, TV[i], V[j]));
        }
      }
      es.compute(H);
      const int want = std::min(s.count, k);
      bool done = false;
      if (k >= want + block || k >= max_basis) {
        done = true;
        for (int r = 0; r < want; ++r) {
          const int col = k - 1 - r;  // largest theta first
          const Vector coef = es.eigenvectors().col(col);
          const double theta = es.eigenvalues()(col);
          Vector ritz = Vector::Zero(n), img = Vector::Zero(n);
          for (int i = 0; i < k; ++i) {
            ritz += coef(i) * V[i];
            img += coef(i) * TV[i];
          }
          const double rn = weighted_norm(W, img - theta * ritz);
          if (rn > s.tol * 1e-2 * std::abs(theta)) {
            done = false;
            break;
          }
        }
      }
      if (done || k >= max_basis) {
        std::vector<EigenPair> pairs;
        bool accurate = true;
        for (int r = 0; r < want; ++r) {
          const int col = k - 1 - r;
          const Vector coef = es.eigenvectors().col(col);
          Vector ritz = Vector::Zero(n);
          for (int i = 0; i < k; ++i) ritz += coef(i) * V[i];
          pairs.push_back(detail::finish_pair(psi, links, to_field(ritz, grid)));
          accurate = accurate && pairs.back().residual <= s.tol * std::max(1.0, std::abs(pairs.back().value));
        }
        if (accurate || k >= max_basis) {
          out.converged = accurate;
          out.pairs = std::move(pairs);
          break;
        }
      }
      current.clear();
      for (auto& x : next) {
        if (static_cast<int>(V.size()) >= max_basis) break;
        if (orthogonalize(x)) {
          V.push_back(x);
          current.push_back(x);
        }
      }
      if (current.empty()) {
        // invariant subspace; replenish with a fresh random vector
        Vector x(n);
        for (Eigen::Index q = 0; q < n; ++q) x(q) = nd(rng);
        if (!orthogonalize(x)) break;
        V.push_back(x);
        current.push_back(x);
      }
    }
    for (const auto& p : out.pairs) {
      if (p.residual > s.tol * std::max(1.0, std::abs(p.value))) out.converged = false;
    }
  }
  if (phase) out.phase_mode = detail::finish_pair(psi, links, *phase);
  std::sort(out.pairs.begin(), out.pairs.end(), [](const EigenPair& a, const EigenPair& b) { return a.value < b.value; });
  return out;
}

/// The m algebraically smallest eigenpairs including the phase mode at solutions.
inline std::vector<EigenPair> leading_eigenpairs(const OrderField& psi, const LinkField& links,
                                                 const EigenSettings& s = {}) {
  Spectrum sp = deflated_eigenpairs(psi, links, s);
  if (!sp.converged) throw std::runtime_error("leading_eigenpairs: eigensolver did not converge");
  std::vector<EigenPair> all = std::move(sp.pairs);
  if (sp.phase_mode) all.push_back(*sp.phase_mode);
  std::sort(all.begin(), all.end(), [](const EigenPair& a, const EigenPair& b) { return a.value < b.value; });
  if (static_cast<int>(all.size()) > s.count) all.resize(s.count);
  return all;
}

struct StabilitySettings {
  EigenSettings eigen{};
  double tol_stab = 1e-6;
  double gap = 1e-4;  // multiplicity clustering
  int max_count = 48;
};

struct StabilityInfo {
  std::vector<double> eigenvalues;  // deflated, ascending
  std::vector<OrderField> eigenfields;
  int n_unstable = 0;
  bool stable = true;
  int critical_index = -1;  // eigenvalue nearest zero
  double critical_value = 0.0;
  int critical_multiplicity = 0;
  std::optional<double> phase_mode_value;
  bool converged = false;
};

/// Stability of a converged state: J positive semidefinite off the phase mode.
///
/// The number of requested eigenpairs grows until at least one nonnegative
/// deflated eigenvalue is found, so n_unstable is a full count.
inline StabilityInfo stability(const OrderField& psi, const LinkField& links, const StabilitySettings& s = {}) {
  EigenSettings es = s.eigen;
  Spectrum sp;
  while (true) {
    sp = deflated_eigenpairs(psi, links, es);
    const bool has_nonneg = std::any_of(sp.pairs.begin(), sp.pairs.end(),
                                        [&](const EigenPair& p) { return p.value >= -s.tol_stab; });
    // keep a couple of nonnegative values so the critical cluster is complete
    int nonneg = 0;
    for (const auto& p : sp.pairs) nonneg += p.value >= -s.tol_stab ? 1 : 0;
    if ((has_nonneg && nonneg >= std::min(2, es.count)) || es.count >= s.max_count) break;
    es.count = std::min(2 * es.count, s.max_count);
    es.block = std::max(es.block, 3);
  }
  StabilityInfo info;
  info.converged = sp.converged;
  if (sp.phase_mode) info.phase_mode_value = sp.phase_mode->value;
  for (auto& p : sp.pairs) {
    info.eigenvalues.push_back(p.value);
    info.eigenfields.push_back(std::move(p.field));
  }
  for (double v : info.eigenvalues) info.n_unstable += v < -s.tol_stab ? 1 : 0;
  info.stable = info.n_unstable == 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < info.eigenvalues.size(); ++k) {
    if (std::abs(info.eigenvalues[k]) < best) {
      best = std::abs(info.eigenvalues[k]);
      info.critical_index = static_cast<int>(k);
    }
  }
  if (info.critical_index >= 0) {
    info.critical_value = info.eigenvalues[info.critical_index];
    for (double v : info.eigenvalues) info.critical_multiplicity += std::abs(v - info.critical_value) <= s.gap ? 1 : 0;
  }
  return info;
}

}  // namespace glv
