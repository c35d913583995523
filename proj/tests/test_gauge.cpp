#include <catch_amalgamated.hpp>

#include <random>

#include "glv/glop.hpp"
#include "support.hpp"

using namespace glv;
using Catch::Approx;

TEST_CASE("vector potential", "[gauge]") {
  auto a = vector_potential(2.0, 0.0, 1.0);
  CHECK(a[0] == -1.0);
  CHECK(a[1] == 0.0);
  a = vector_potential(1.0, 1.0, 0.0);
  CHECK(a[0] == 0.0);
  CHECK(a[1] == 0.5);
  a = vector_potential(0.0, 3.0, -2.0);
  CHECK(a[0] == 0.0);
  CHECK(a[1] == 0.0);
}

TEST_CASE("edge integrals", "[gauge]") {
  const Grid g(2.0, 4);  // h = 0.5, y_2 = 1
  CHECK(edge_integral_x(1.0, 0, 2, g) == Approx(-0.25));
  CHECK(edge_integral_y(1.0, 2, 0, g) == Approx(0.25));
  CHECK(edge_integral_x(0.0, -1, 1, g) == 0.0);
  CHECK_THROWS_AS(edge_integral_x(1.0, 2, 0, g), std::out_of_range);
  CHECK_THROWS_AS(edge_integral_y(1.0, 0, 2, g), std::out_of_range);
  CHECK_THROWS_AS(edge_integral_x(1.0, 0, 3, g), std::out_of_range);
}

TEST_CASE("link field", "[gauge]") {
  const Grid g(3.0, 12);
  const LinkField zero = link_field(g, 0.0);
  for (auto u : zero.x_links()) CHECK(u == Complex(1.0, 0.0));
  for (auto u : zero.y_links()) CHECK(u == Complex(1.0, 0.0));

  const double mu = 1.3;
  const LinkField l = link_field(g, mu);
  for (auto u : l.x_links()) CHECK(std::abs(std::abs(u) - 1.0) < 1e-15);
  for (auto u : l.y_links()) CHECK(std::abs(std::abs(u) - 1.0) < 1e-15);

  // reversed edge: exp(-i * (-I)) is the conjugate
  const Complex fwd = l.x(1, 2);
  const Complex rev = std::polar(1.0, edge_integral_x(mu, 1, 2, g));
  CHECK(std::abs(std::conj(fwd) - rev) < 1e-15);

  // plaquette product is the discrete flux exp(-i mu h^2) everywhere
  const Complex flux = std::polar(1.0, -mu * g.h() * g.h());
  const int hf = g.half();
  for (int j = -hf; j < hf; ++j) {
    for (int i = -hf; i < hf; ++i) {
      const Complex p = l.x(i, j) * l.y(i + 1, j) * std::conj(l.x(i, j + 1)) * std::conj(l.y(i, j));
      CHECK(std::abs(p - flux) < 1e-14);
    }
  }
}

TEST_CASE("gauge covariance of the residual", "[gauge][glop]") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> uni(-3.0, 3.0);
  for (int n : {8, 16}) {
    const Grid g(3.0, n);
    const OrderField psi = testing::random_field(g, rng);
    std::vector<double> chi(g.size());
    for (auto& c : chi) c = uni(rng);
    const LinkField l = link_field(g, 0.8);
    const LinkField lt = gauge_transform(l, chi);
    OrderField psit = psi;
    for (std::size_t k = 0; k < g.size(); ++k) psit[k] *= std::polar(1.0, chi[k]);
    const OrderField r = residual(psi, l), rt = residual(psit, lt);
    const double scale = testing::max_abs(r);
    for (std::size_t k = 0; k < g.size(); ++k) {
      CHECK(std::abs(std::abs(r[k]) - std::abs(rt[k])) <= 1e-12 * scale);
      CHECK(std::abs(rt[k] - r[k] * std::polar(1.0, chi[k])) <= 1e-12 * scale);
    }
  }
}

TEST_CASE("mu derivative of the links", "[gauge]") {
  const Grid g(3.0, 8);
  const double mu = 0.9, eps = 1e-6;
  const LinkField d = link_field_dmu(g, mu);
  const LinkField p = link_field(g, mu + eps), m = link_field(g, mu - eps);
  for (std::size_t k = 0; k < d.x_links().size(); ++k) {
    CHECK(std::abs((p.x_links()[k] - m.x_links()[k]) / (2 * eps) - d.x_links()[k]) < 1e-8);
  }
  for (std::size_t k = 0; k < d.y_links().size(); ++k) {
    CHECK(std::abs((p.y_links()[k] - m.y_links()[k]) / (2 * eps) - d.y_links()[k]) < 1e-8);
  }
}
