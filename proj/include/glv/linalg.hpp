#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "glv/grid.hpp"

namespace glv {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Real-linear map on realified coordinates with the weights of its inner product.
struct LinearOperator {
  std::function<void(const Vector&, Vector&)> apply;
  Vector weights;  // inner product <a, b> = sum weights_k a_k b_k
  bool symmetric = false;

  Eigen::Index dim() const { return weights.size(); }
  Vector operator()(const Vector& x) const {
    Vector y(x.size());
    apply(x, y);
    return y;
  }
};

using Preconditioner = std::function<void(const Vector&, Vector&)>;

struct SolveReport {
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
  std::optional<double> condition_estimate;
  std::string message;
  std::vector<double> residual_history;
};

inline double weighted_dot(const Vector& w, const Vector& a, const Vector& b) {
  return (w.array() * a.array() * b.array()).sum();
}

inline double weighted_norm(const Vector& w, const Vector& a) { return std::sqrt(weighted_dot(w, a, a)); }

/// Realified weights for a grid: every node weight appears twice (re, im).
inline Vector realified_weights(const Grid& grid, int extra = 0) {
  Vector w(2 * static_cast<Eigen::Index>(grid.size()) + extra);
  for (std::size_t k = 0; k < grid.size(); ++k) {
    w(2 * k) = grid.weight(k);
    w(2 * k + 1) = grid.weight(k);
  }
  for (int e = 0; e < extra; ++e) w(2 * grid.size() + e) = 1.0;
  return w;
}

inline Vector to_vector(const OrderField& f, int extra = 0) {
  Vector v(static_cast<Eigen::Index>(f.real_size()) + extra);
  v.head(f.real_size()) = Eigen::Map<const Vector>(f.real_data(), f.real_size());
  if (extra > 0) v.tail(extra).setZero();
  return v;
}

inline OrderField to_field(const Vector& v, const Grid& grid) {
  OrderField f(grid);
  if (static_cast<std::size_t>(v.size()) < f.real_size()) {
    throw std::invalid_argument("to_field: vector too short");
  }
  Eigen::Map<Vector>(f.real_data(), f.real_size()) = v.head(f.real_size());
  return f;
}

namespace detail {
inline bool finite(double x) { return std::isfinite(x); }
}  // namespace detail

/// Preconditioned MINRES under the operator's weighted inner product.
///
/// The preconditioner must be self-adjoint positive definite under the same product.
/// For singular operators with inconsistent right-hand sides the iteration stalls at the
/// least-squares residual and the report is flagged not converged.
inline std::pair<Vector, SolveReport> solve_symmetric(const LinearOperator& op, const Vector& rhs, double tol,
                                                      int maxit, const Preconditioner& precond = {}) {
  const Vector& W = op.weights;
  const Eigen::Index n = op.dim();
  if (rhs.size() != n) throw std::invalid_argument("solve_symmetric: dimension mismatch");
  if (maxit <= 0) maxit = static_cast<int>(10 * n);
  SolveReport rep;
  Vector x = Vector::Zero(n);
  auto psolve = [&](const Vector& in, Vector& out) {
    if (precond) {
      precond(in, out);
    } else {
      out = in;
    }
  };

  const double bnorm = weighted_norm(W, rhs);
  if (bnorm == 0.0) {
    rep.converged = true;
    rep.message = "zero right-hand side";
    return {x, rep};
  }
  Vector r1 = rhs;
  Vector y(n);
  psolve(r1, y);
  double beta1 = weighted_dot(W, r1, y);
  if (!(beta1 > 0.0)) {
    rep.message = "preconditioner is not positive definite";
    return {x, rep};
  }
  beta1 = std::sqrt(beta1);

  double oldb = 0.0, beta = beta1, dbar = 0.0, epsln = 0.0, phibar = beta1;
  double cs = -1.0, sn = 0.0, tnorm2 = 0.0;
  Vector w = Vector::Zero(n), w1(n), w2 = Vector::Zero(n), r2 = r1, v(n);
  const double eps = std::numeric_limits<double>::epsilon();
  double last_true = 1.0;

  for (int itn = 1; itn <= maxit; ++itn) {
    v = y / beta;
    op.apply(v, y);
    if (itn >= 2) y -= (beta / oldb) * r1;
    const double alfa = weighted_dot(W, v, y);
    y -= (alfa / beta) * r2;
    r1 = r2;
    r2 = y;
    psolve(r2, y);
    oldb = beta;
    beta = weighted_dot(W, r2, y);
    if (beta < 0.0 || !detail::finite(beta)) {
      rep.iterations = itn;
      rep.message = "breakdown: indefinite preconditioner or NaN";
      return {x, rep};
    }
    beta = std::sqrt(beta);
    tnorm2 += alfa * alfa + oldb * oldb + beta * beta;

    const double oldeps = epsln;
    const double delta = cs * dbar + sn * alfa;
    const double gbar = sn * dbar - cs * alfa;
    epsln = sn * beta;
    dbar = -cs * beta;
    const double root = std::hypot(gbar, dbar);
    const double anorm = std::sqrt(tnorm2);
    const double gamma_raw = std::hypot(gbar, beta);
    if (gamma_raw <= 10.0 * eps * anorm) {
      // invariant Krylov space with a singular tridiagonal: x is the least-squares iterate
      rep.iterations = itn;
      rep.message = "least-squares solution reached; residual not reducible";
      break;
    }
    const double gamma = std::max(gamma_raw, eps);
    cs = gbar / gamma;
    sn = beta / gamma;
    const double phi = cs * phibar;
    phibar = sn * phibar;

    w1 = w2;
    w2 = w;
    w = (v - oldeps * w1 - delta * w2) / gamma;
    x += phi * w;

    rep.iterations = itn;
    rep.residual_history.push_back(phibar / beta1);
    if (!detail::finite(phibar) || !x.allFinite()) {
      rep.message = "breakdown: NaN";
      return {x, rep};
    }
    // scaled norm of A r relative to |A| |r|; small means the least-squares iterate
    const double test2 = root / anorm;
    if (phibar / beta1 <= tol || beta == 0.0) {
      Vector res = rhs - op(x);
      last_true = weighted_norm(W, res) / bnorm;
      if (last_true <= tol || beta == 0.0) break;
    }
    if (test2 <= std::max(tol, 10.0 * eps)) {
      rep.message = "least-squares solution reached; residual not reducible";
      break;
    }
  }
  Vector res = rhs - op(x);
  rep.relative_residual = weighted_norm(W, res) / bnorm;
  rep.converged = rep.relative_residual <= tol;
  if (!rep.converged && rep.message.empty()) rep.message = "maximum iterations reached";
  return {x, rep};
}

/// Right-preconditioned restarted GMRES under the operator's weighted inner product.
inline std::pair<Vector, SolveReport> solve_general(const LinearOperator& op, const Vector& rhs, double tol, int maxit,
                                                    const Preconditioner& precond = {}, int restart = 150) {
  const Vector& W = op.weights;
  const Eigen::Index n = op.dim();
  if (rhs.size() != n) throw std::invalid_argument("solve_general: dimension mismatch");
  if (maxit <= 0) maxit = static_cast<int>(10 * n);
  restart = static_cast<int>(std::max<Eigen::Index>(1, std::min<Eigen::Index>(restart, n)));
  SolveReport rep;
  Vector x = Vector::Zero(n);
  const double bnorm = weighted_norm(W, rhs);
  if (bnorm == 0.0) {
    rep.converged = true;
    rep.message = "zero right-hand side";
    return {x, rep};
  }
  auto psolve = [&](const Vector& in, Vector& out) {
    if (precond) {
      precond(in, out);
    } else {
      out = in;
    }
  };

  Vector r = rhs;
  double beta = bnorm;
  int total = 0;
  std::vector<Vector> V;
  Matrix H;
  Vector g, cs, sn;
  Vector z(n), wv(n);
  while (total < maxit) {
    V.assign(1, r / beta);
    H = Matrix::Zero(restart + 1, restart);
    g = Vector::Zero(restart + 1);
    cs = Vector::Zero(restart);
    sn = Vector::Zero(restart);
    g(0) = beta;
    int k = 0;
    bool breakdown = false;
    for (; k < restart && total < maxit; ++k) {
      psolve(V[k], z);
      op.apply(z, wv);
      for (int pass = 0; pass < 2; ++pass) {
        for (int i = 0; i <= k; ++i) {
          const double hij = weighted_dot(W, wv, V[i]);
          H(i, k) += hij;
          wv -= hij * V[i];
        }
      }
      H(k + 1, k) = weighted_norm(W, wv);
      for (int i = 0; i < k; ++i) {
        const double t = cs(i) * H(i, k) + sn(i) * H(i + 1, k);
        H(i + 1, k) = -sn(i) * H(i, k) + cs(i) * H(i + 1, k);
        H(i, k) = t;
      }
      const double denom = std::hypot(H(k, k), H(k + 1, k));
      if (denom == 0.0) {
        breakdown = true;
        ++total;
        break;
      }
      const double hk1 = H(k + 1, k);
      cs(k) = H(k, k) / denom;
      sn(k) = hk1 / denom;
      H(k, k) = denom;
      H(k + 1, k) = 0.0;
      g(k + 1) = -sn(k) * g(k);
      g(k) = cs(k) * g(k);
      ++total;
      rep.residual_history.push_back(std::abs(g(k + 1)) / bnorm);
      if (!std::isfinite(g(k + 1))) {
        rep.iterations = total;
        rep.message = "breakdown: NaN";
        return {x, rep};
      }
      const bool done = std::abs(g(k + 1)) <= tol * bnorm;
      if (hk1 <= 1e-300) {
        breakdown = true;
      } else {
        V.push_back(wv / hk1);
      }
      if (done || breakdown) {
        ++k;
        break;
      }
    }
    // back substitution on the k x k triangle
    Vector yk = Vector::Zero(k);
    for (int i = k - 1; i >= 0; --i) {
      double s = g(i);
      for (int jj = i + 1; jj < k; ++jj) s -= H(i, jj) * yk(jj);
      yk(i) = (H(i, i) != 0.0) ? s / H(i, i) : 0.0;
    }
    Vector comb = Vector::Zero(n);
    for (int i = 0; i < k; ++i) comb += yk(i) * V[i];
    psolve(comb, z);
    x += z;
    r = rhs - op(x);
    beta = weighted_norm(W, r);
    if (beta <= tol * bnorm || breakdown) break;
  }
  rep.iterations = total;
  rep.relative_residual = beta / bnorm;
  rep.converged = rep.relative_residual <= tol;
  if (!rep.converged) rep.message = (total >= maxit) ? "maximum iterations reached" : "stagnation";
  return {x, rep};
}

/// Columns are the operator applied to the canonical basis vectors.
inline Matrix dense_materialize(const LinearOperator& op) {
  const Eigen::Index n = op.dim();
  Matrix m(n, n);
  Vector e = Vector::Zero(n), col(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    e(j) = 1.0;
    op.apply(e, col);
    m.col(j) = col;
    e(j) = 0.0;
  }
  return m;
}

/// Gram form W M of a materialized operator; symmetric iff the operator is self-adjoint.
inline Matrix dense_gram(const LinearOperator& op) { return op.weights.asDiagonal() * dense_materialize(op); }

inline Vector singular_values(const Matrix& m) { return Eigen::JacobiSVD<Matrix>(m).singularValues(); }

/// Number of singular values below rel_tol times the largest one.
inline int nullity(const Matrix& m, double rel_tol = 1e-8) {
  const Vector s = singular_values(m);
  const double smax = s.size() > 0 ? s(0) : 0.0;
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (smax > 0.0 && s(i) > rel_tol * smax) ++rank;
  }
  return static_cast<int>(m.cols()) - rank;
}

inline int numerical_rank(const Matrix& m, double abs_tol) {
  const Vector s = singular_values(m);
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > abs_tol) ++rank;
  }
  return rank;
}

struct BorderedNullity {
  int k = 0;
  int k_tilde = 0;
  bool b_outside_range = false;
  bool f_nonzero_on_kernel = false;
  bool predicate = false;
  /// (k_tilde < k) <=> predicate
  bool consistent = false;
};

/// Oracle for the bordering lemma on [[L, b], [f^T, d]] using rank-revealing SVDs.
inline BorderedNullity bordered_nullity(const Matrix& L, const Vector& b, const Vector& f, double d,
                                        double rel_tol = 1e-8) {
  const Eigen::Index n = L.rows();
  if (L.cols() != n || b.size() != n || f.size() != n) {
    throw std::invalid_argument("bordered_nullity: dimension mismatch");
  }
  BorderedNullity out;
  Matrix bordered(n + 1, n + 1);
  bordered.topLeftCorner(n, n) = L;
  bordered.topRightCorner(n, 1) = b;
  bordered.bottomLeftCorner(1, n) = f.transpose();
  bordered(n, n) = d;

  const double scale = std::max({L.norm(), b.norm(), f.norm(), std::abs(d), 1e-300});
  const double abs_tol = rel_tol * scale;

  Eigen::JacobiSVD<Matrix> svd(L, Eigen::ComputeFullV);
  const Vector s = svd.singularValues();
  int rank_l = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > abs_tol) ++rank_l;
  }
  out.k = static_cast<int>(n) - rank_l;
  out.k_tilde = static_cast<int>(n + 1) - numerical_rank(bordered, abs_tol);

  Matrix aug(n, n + 1);
  aug << L, b;
  out.b_outside_range = numerical_rank(aug, abs_tol) > rank_l;
  if (out.k > 0) {
    const Matrix kernel = svd.matrixV().rightCols(out.k);
    out.f_nonzero_on_kernel = (kernel.transpose() * f).norm() > abs_tol;
  }
  out.predicate = out.b_outside_range && out.f_nonzero_on_kernel;
  out.consistent = ((out.k_tilde < out.k) == out.predicate);
  return out;
}

/// 1-norm condition number of a dense matrix; infinity when exactly singular.
inline double condition_number_1(const Matrix& m) {
  Eigen::PartialPivLU<Matrix> lu(m);
  const Matrix inv = lu.inverse();
  if (!inv.allFinite()) return std::numeric_limits<double>::infinity();
  auto norm1 = [](const Matrix& a) { return a.cwiseAbs().colwise().sum().maxCoeff(); };
  return norm1(m) * norm1(inv);
}

/// 1-norm condition number of the dense materialization (small problems only).
inline double condition_estimate(const LinearOperator& op) { return condition_number_1(dense_materialize(op)); }

}  // namespace glv
