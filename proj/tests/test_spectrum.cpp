#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "qlsys/spectrum.hpp"

using namespace qlsys;
using Catch::Approx;

namespace {
const double pi = std::numbers::pi;
}

TEST_CASE("principal eigenvalue matches the closed form") {
  for (int n : {15, 31, 63}) {
    auto g = build_grid({n, n, 1.0, 1.0});
    const double h = 1.0 / (n + 1);
    const double exact = 8.0 / (h * h) * std::pow(std::sin(pi * h / 2.0), 2);
    auto eig = principal_eigenpair(g, 1e-12, 500);
    CHECK(std::fabs(eig.mu - exact) / exact <= 1e-10);
    CHECK(eig.residual <= 1e-9 * eig.mu);
    CHECK(eig.iterations > 0);
    if (n == 63) CHECK(std::fabs(eig.mu - 2.0 * pi * pi) / (2.0 * pi * pi) < 1e-3);
  }
}

TEST_CASE("eigenvector is positive and normalized") {
  auto g = build_grid({21, 17, 1.0, 0.8});
  auto eig = principal_eigenpair(g);
  CHECK(*std::min_element(eig.phi.values.begin(), eig.phi.values.end()) > 0.0);
  CHECK(nodal_l2(eig.phi.values, g) == Approx(1.0).epsilon(1e-12));
  CHECK(eig.mu == Approx(stencil_mu1_exact(g)).epsilon(1e-10));
}

TEST_CASE("rectangle eigenvalue approaches the continuum value") {
  const double exact = pi * pi * (0.25 + 1.0);
  double prev = 1e300;
  for (int n : {7, 15, 31}) {
    auto g = build_grid({2 * n + 1, n, 2.0, 1.0});
    auto eig = principal_eigenpair(g);
    const double err = std::fabs(eig.mu - exact);
    CHECK(err < prev / 3.5);
    prev = err;
  }
  CHECK(prev / exact < 2e-3);
}

TEST_CASE("quadrature Rayleigh quotient of the eigenvector") {
  // The sine mode diagonalizes both the 5-point stencil and the quadrature
  // forms; the quadrature quotient has its own closed form and exceeds the
  // stencil value by O(h^2).
  std::vector<double> gap;
  for (int n : {15, 31, 63}) {
    auto g = build_grid({n, n, 1.0, 1.0});
    auto eig = principal_eigenpair(g);
    const double rq = integrate(grad_sq(eig.phi, g), g) / l2_inner(eig.phi, eig.phi, g);
    CHECK(rq == Approx(StiffnessInverse::quadrature_mu1(g)).epsilon(1e-8));
    CHECK(rq > eig.mu);
    gap.push_back(rq - eig.mu);
  }
  CHECK(std::log2(gap[0] / gap[1]) > 1.9);
  CHECK(std::log2(gap[1] / gap[2]) > 1.9);
}

TEST_CASE("discrete Poincare inequality") {
  auto g = build_grid({23, 19, 1.0, 1.3});
  auto eig = principal_eigenpair(g);
  const double mu = conservative_mu1(g, eig);
  CHECK(mu == eig.mu);
  std::mt19937_64 rng(53);
  std::normal_distribution<double> d;
  for (int k = 0; k < 100; ++k) {
    ScalarField f(g);
    for (double& v : f.values) v = d(rng);
    if (k % 3 == 0) f += eig.phi;
    CHECK(integrate(grad_sq(f, g), g) >= mu * l2_inner(f, f, g));
  }
}

TEST_CASE("admissibility thresholds") {
  const double mu = 2.0 * pi * pi;
  CHECK(admissible(0.0, 0.0, 4.0, 1.0, 1.0, mu) == Admissibility::admissible);
  CHECK(admissible(9.0, 9.0, 4.0, 1.0, 1.0, mu) == Admissibility::admissible);
  CHECK(admissibility_threshold(4.0, 1.0, 1.0, mu) == Approx(pi * pi));
  CHECK(admissible(12.0, 0.0, 4.0, 1.0, 1.0, mu) == Admissibility::admissible_weak);
  CHECK(admissible(0.0, 25.0, 4.0, 1.0, 1.0, mu) == Admissibility::inadmissible);
  CHECK(admissible(mu / 2, mu / 2, 4.0, 1.999999, 1.0, mu) == Admissibility::admissible_weak);
  CHECK(admissible(mu / 2, mu / 2, 4.0, 2.0 - 1e-12, 0.4, mu) == Admissibility::inadmissible);
  for (double p : {2.5, 3.0, 6.0})
    for (double gamma : {0.1, 0.3})
      CHECK(admissible(0.0, 0.0, p, gamma, 0.5, 3.0) == Admissibility::admissible);
}
