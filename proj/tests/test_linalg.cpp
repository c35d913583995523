#include <catch_amalgamated.hpp>

#include <Eigen/QR>

#include <random>

#include "glv/glop.hpp"
#include "glv/linalg.hpp"
#include "support.hpp"

using namespace glv;
using Catch::Approx;

namespace {

LinearOperator dense_op(const Matrix& m, bool symmetric) {
  LinearOperator op;
  op.weights = Vector::Ones(m.rows());
  op.symmetric = symmetric;
  op.apply = [m](const Vector& x, Vector& y) { y = m * x; };
  return op;
}

Matrix random_orthogonal(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd;
  Matrix a(n, n);
  for (int i = 0; i < a.size(); ++i) a.data()[i] = nd(rng);
  Eigen::HouseholderQR<Matrix> qr(a);
  return qr.householderQ();
}

}  // namespace

TEST_CASE("minres on the identity", "[linalg]") {
  const Vector b = Vector::LinSpaced(6, 1.0, 6.0);
  auto [x, rep] = solve_symmetric(dense_op(Matrix::Identity(6, 6), true), b, 1e-12, 10);
  CHECK(rep.converged);
  CHECK(rep.iterations == 1);
  CHECK((x - b).norm() < 1e-14);
}

TEST_CASE("minres on K - 1 against a dense solve", "[linalg]") {
  const Grid g(3.0, 8);
  const LinkField l = link_field(g, 0.0);
  const OrderField zero(g);
  LinearOperator op;
  op.weights = realified_weights(g);
  op.symmetric = true;
  op.apply = [&](const Vector& x, Vector& y) { y = to_vector(apply_jacobian(zero, to_field(x, g), l)); };
  std::mt19937_64 rng(1);
  const Vector b = to_vector(testing::random_field(g, rng));
  auto [x, rep] = solve_symmetric(op, b, 1e-12, 2000);
  CHECK(rep.converged);
  const Vector ref = dense_materialize(op).partialPivLu().solve(b);
  CHECK((x - ref).norm() <= 1e-9 * ref.norm());
  // residual history is non-increasing
  for (std::size_t k = 1; k < rep.residual_history.size(); ++k) {
    CHECK(rep.residual_history[k] <= rep.residual_history[k - 1] * (1.0 + 1e-12));
  }
}

TEST_CASE("minres on singular systems", "[linalg]") {
  Matrix m = Matrix::Zero(4, 4);
  m.diagonal() << 2.0, -1.0, 3.0, 0.0;
  const LinearOperator op = dense_op(m, true);
  Vector consistent(4);
  consistent << 1.0, 2.0, 3.0, 0.0;
  auto [x, rep] = solve_symmetric(op, consistent, 1e-12, 50);
  CHECK(rep.converged);
  const Matrix pinv = m.completeOrthogonalDecomposition().pseudoInverse();
  CHECK((x - pinv * consistent).norm() < 1e-12);

  Vector inconsistent = consistent;
  inconsistent(3) = 1.0;
  auto [y, rep2] = solve_symmetric(op, inconsistent, 1e-12, 50);
  CHECK_FALSE(rep2.converged);
  // least-squares: the residual is the component outside the range
  CHECK((m * y - m * pinv * inconsistent).norm() < 1e-10);
}

TEST_CASE("gmres small and orthogonal systems", "[linalg]") {
  Matrix a(2, 2);
  a << 1.0, 2.0, -3.0, 0.5;
  Vector b(2);
  b << 1.0, -1.0;
  auto [x, rep] = solve_general(dense_op(a, false), b, 1e-14, 10);
  CHECK(rep.converged);
  CHECK((a * x - b).norm() < 1e-14);

  std::mt19937_64 rng(2);
  const int n = 30;
  const Matrix q = random_orthogonal(n, rng);
  const Vector c = Vector::Random(n);
  auto [y, rep2] = solve_general(dense_op(q, false), c, 1e-12, 1000);
  CHECK(rep2.converged);
  CHECK(rep2.iterations <= n);
  CHECK((q * y - c).norm() < 1e-10);
}

TEST_CASE("dense oracles", "[linalg]") {
  const LinearOperator id = dense_op(Matrix::Identity(5, 5), true);
  CHECK((dense_materialize(id) - Matrix::Identity(5, 5)).norm() == 0.0);
  CHECK(condition_estimate(id) == Approx(1.0));
  Matrix z = Matrix::Zero(3, 3);
  z(0, 0) = 1.0;
  CHECK(nullity(z) == 2);
  CHECK(std::isinf(condition_number_1(z)));
}

TEST_CASE("bordering lemma on scalars", "[linalg]") {
  const Matrix l = Matrix::Zero(1, 1);
  auto r = bordered_nullity(l, Vector::Ones(1), Vector::Ones(1), 0.0);
  CHECK(r.k == 1);
  CHECK(r.k_tilde == 0);
  CHECK(r.predicate);
  CHECK(r.consistent);
  r = bordered_nullity(l, Vector::Zero(1), Vector::Ones(1), 0.0);
  CHECK(r.k == 1);
  CHECK(r.k_tilde == 1);
  CHECK_FALSE(r.predicate);
  CHECK(r.consistent);
}
