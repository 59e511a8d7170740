#include <catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "qlsys/grid.hpp"
#include "qlsys/poisson.hpp"

using namespace qlsys;
using Catch::Approx;

namespace {

const double pi = std::numbers::pi;

ScalarField sine_mode(const Grid& g) {
  return sample_nodes(g, [&](double x, double y) {
    return std::sin(pi * x / g.lx()) * std::sin(pi * y / g.ly());
  });
}

ScalarField random_field(const Grid& g, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  ScalarField f(g);
  for (double& v : f.values) v = d(rng);
  return f;
}

}  // namespace

TEST_CASE("build_grid validates and sizes") {
  CHECK_THROWS_AS(build_grid({1, 4, 1.0, 1.0}), InvalidSpec);
  CHECK_THROWS_AS(build_grid({4, 4, 0.0, 1.0}), InvalidSpec);
  CHECK_THROWS_AS(build_grid({4, 4, 1.0, -2.0}), InvalidSpec);

  auto g = build_grid({3, 3, 1.0, 1.0});
  CHECK(g.hx() == 0.25);
  CHECK(g.hy() == 0.25);
  CHECK(g.cell_count() == 16u);

  auto big = build_grid({63, 63, 1.0, 1.0});
  CHECK(big.node_count() == 3969u);
}

TEST_CASE("integrate of constants") {
  auto g = build_grid({7, 5, 1.0, 1.0});
  CellField one(g.cell_count(), 1.0);
  CHECK(integrate(one, g) == Approx(1.0).epsilon(1e-15));
  CellField zero(g.cell_count(), 0.0);
  CHECK(integrate(zero, g) == 0.0);

  auto r = build_grid({9, 4, 2.0, 0.5});
  CellField c(r.cell_count(), 3.0);
  CHECK(integrate(c, r) == Approx(3.0).epsilon(1e-14));
}

TEST_CASE("integrate is linear") {
  auto g = build_grid({11, 13, 1.3, 0.7});
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  CellField f(g.cell_count()), h(g.cell_count()), mix(g.cell_count());
  for (std::size_t k = 0; k < f.size(); ++k) {
    f[k] = d(rng);
    h[k] = d(rng);
    mix[k] = 2.5 * f[k] - 0.75 * h[k];
  }
  CHECK(integrate(mix, g) ==
        Approx(2.5 * integrate(f, g) - 0.75 * integrate(h, g)).margin(1e-14));
}

TEST_CASE("single hat gradient by hand") {
  auto g = build_grid({5, 5, 1.0, 1.0});
  const double h = g.hx();
  ScalarField f(g);
  f[g.index(2, 2)] = 1.0;
  auto gs = grad_sq(f, g);
  const double expect = std::pow(1.0 / (2.0 * h), 2) * 2.0;
  int touched = 0;
  for (double v : gs) {
    if (v != 0.0) {
      ++touched;
      CHECK(v == Approx(expect).epsilon(1e-14));
    }
  }
  CHECK(touched == 4);
  auto zero = grad_sq(ScalarField(g), g);
  for (double v : zero) CHECK(v == 0.0);
}

TEST_CASE("sine mode integrals converge at second order") {
  // |grad phi|^2 integrates to pi^2/2 and phi^2 to 1/4 on the unit square
  std::vector<double> err_grad, err_mass, err_rq;
  for (int n : {15, 31, 63}) {
    auto g = build_grid({n, n, 1.0, 1.0});
    auto phi = sine_mode(g);
    const double a = integrate(grad_sq(phi, g), g);
    const double m = l2_inner(phi, phi, g);
    err_grad.push_back(std::fabs(a - pi * pi / 2.0));
    err_mass.push_back(std::fabs(m - 0.25));
    err_rq.push_back(std::fabs(a / m - 2.0 * pi * pi));
  }
  for (std::size_t k = 1; k < err_grad.size(); ++k) {
    CHECK(std::log2(err_grad[k - 1] / err_grad[k]) >= 1.9);
    CHECK(std::log2(err_mass[k - 1] / err_mass[k]) >= 1.9);
    CHECK(std::log2(err_rq[k - 1] / err_rq[k]) >= 1.9);
  }
  CHECK(err_rq.back() < 1e-2);
}

TEST_CASE("rectangle Rayleigh quotient converges at second order") {
  const double lx = 2.0, ly = 0.75;
  const double exact = pi * pi * (1.0 / (lx * lx) + 1.0 / (ly * ly));
  std::vector<double> err;
  for (int n : {15, 31, 63}) {
    auto g = build_grid({2 * n + 1, n, lx, ly});
    auto phi = sine_mode(g);
    err.push_back(std::fabs(integrate(grad_sq(phi, g), g) / l2_inner(phi, phi, g) - exact));
  }
  CHECK(std::log2(err[0] / err[1]) >= 1.9);
  CHECK(std::log2(err[1] / err[2]) >= 1.9);
}

TEST_CASE("l2_inner properties") {
  auto g = build_grid({8, 9, 1.0, 2.0});
  std::mt19937_64 rng(11);
  auto f = random_field(g, rng);
  auto h = random_field(g, rng);
  CHECK(l2_inner(f, f, g) >= 0.0);
  CHECK(l2_inner(f, h, g) == Approx(l2_inner(h, f, g)).margin(1e-15));
  CHECK(l2_inner(f, ScalarField(g), g) == 0.0);

  auto other = build_grid({9, 9, 1.0, 2.0});
  CHECK_THROWS_AS(l2_inner(f, ScalarField(other), g), GridMismatch);
}

TEST_CASE("quadrature stiffness matches the gradient integral") {
  auto g = build_grid({10, 7, 1.0, 0.6});
  std::mt19937_64 rng(3);
  auto f = random_field(g, rng);
  std::vector<double> kf(g.node_count());
  apply_stiffness(g, f.values, kf);
  CHECK(dot(f.values, kf) == Approx(h1_norm_sq(f.values, g)).epsilon(1e-13));
}

TEST_CASE("sine-transform inverse of the stiffness") {
  for (auto spec : {GridSpec{9, 9, 1.0, 1.0}, GridSpec{12, 5, 2.0, 0.5}}) {
    auto g = build_grid(spec);
    StiffnessInverse kinv(g);
    std::mt19937_64 rng(5);
    auto r = random_field(g, rng);
    auto w = kinv.solve(r.values);
    std::vector<double> kw(g.node_count());
    apply_stiffness(g, w, kw);
    for (std::size_t k = 0; k < kw.size(); ++k) CHECK(kw[k] == Approx(r[k]).margin(1e-11));
  }
}

TEST_CASE("CG solves the 5-point system") {
  auto g = build_grid({20, 14, 1.0, 0.7});
  std::mt19937_64 rng(9);
  auto b = random_field(g, rng);
  std::vector<double> x(g.node_count(), 0.0), ax(g.node_count());
  auto op = [&](std::span<const double> v, std::span<double> out) { apply_laplacian_5pt(g, v, out); };
  auto res = conjugate_gradient(op, b.values, x, 1e-12, 2000);
  CHECK(res.converged);
  op(x, ax);
  double err = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < ax.size(); ++k) {
    err += std::pow(ax[k] - b[k], 2);
    nb += b[k] * b[k];
  }
  CHECK(std::sqrt(err / nb) < 1e-11);
}

TEST_CASE("field dump round trip") {
  auto g = build_grid({6, 4, 1.5, 0.8});
  std::mt19937_64 rng(13);
  auto f = random_field(g, rng);
  f[3] = 1.0 / 3.0;
  std::stringstream ss;
  write_field(ss, f, g);
  std::string header;
  std::getline(ss, header);
  CHECK(header == "FIELD 6 4 1.5 0.80000000000000004");
  ss.seekg(0);
  auto back = read_field(ss);
  CHECK(back.grid == g.spec());
  CHECK(back.values == f.values);
}

TEST_CASE("field construction checks length") {
  auto g = build_grid({4, 4, 1.0, 1.0});
  CHECK_THROWS_AS(ScalarField(g, std::vector<double>(15)), InvalidSpec);
  auto g2 = build_grid({4, 5, 1.0, 1.0});
  CHECK_THROWS_AS(StatePair(ScalarField(g), ScalarField(g2)), GridMismatch);
}

TEST_CASE("grid operations are deterministic") {
  auto g = build_grid({17, 17, 1.0, 1.0});
  std::mt19937_64 rng(21);
  auto f = random_field(g, rng);
  const double a = integrate(grad_sq(f, g), g);
  const double b = integrate(grad_sq(f, g), g);
  CHECK(a == b);
}
