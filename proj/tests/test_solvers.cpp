#include <catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "qlsys/solvers.hpp"

using namespace qlsys;

namespace {

// Semilinear ground-state level on the 63 x 63 unit square (identity, lambda = 0,
// p = 4), produced by oracle::semilinear_ground_state and frozen here.
constexpr double kGoldenL63 = 37.8168669751;

const Grid& grid31() {
  static const Grid g(GridSpec{31, 31, 1.0, 1.0});
  return g;
}

ProblemParams params(double beta, double lambda1 = 0.0, double lambda2 = 0.0) {
  return {lambda1, lambda2, beta, 4.0, 1.0};
}

double sup_diff(const ScalarField& a, const ScalarField& b) {
  double m = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::fabs(a[k] - b[k]));
  return m;
}

}  // namespace

TEST_CASE("scalar ground state agrees with the semilinear oracle") {
  const auto& g = grid31();
  const auto id = CoefficientFamily::identity();
  const auto s = scalar_ground_state(0, params(0.0), id, g);
  const auto o = oracle::semilinear_ground_state(g, 0.0, 4.0);
  CHECK(std::fabs(s.L - o.energy) <= 5e-3 * o.energy);
  CHECK(s.L == Catch::Approx(o.energy).epsilon(1e-8));
  CHECK(sup_diff(s.z, o.z) < 1e-6 * sup_diff(o.z, ScalarField(g)));
  CHECK(s.residual <= 1e-8);
  CHECK(s.nonnegative);
  CHECK(s.L > 0.0);
  CHECK(s.L >= s.lower_bound);
}

TEST_CASE("golden scalar level on 63 x 63") {
  const Grid g(GridSpec{63, 63, 1.0, 1.0});
  const auto s = scalar_ground_state(0, params(0.0), CoefficientFamily::identity(), g);
  CHECK(s.L == Catch::Approx(kGoldenL63).epsilon(1e-9));
  const auto o = oracle::semilinear_ground_state(g, 0.0, 4.0);
  CHECK(std::fabs(s.L - o.energy) <= 5e-3 * o.energy);
}

TEST_CASE("scalar level converges under refinement") {
  const auto id = CoefficientFamily::identity();
  double L[3];
  int k = 0;
  for (int n : {15, 31, 63}) {
    const Grid g(GridSpec{n, n, 1.0, 1.0});
    L[k++] = scalar_ground_state(0, params(0.0), id, g).L;
  }
  const double d1 = std::fabs(L[1] - L[0]), d2 = std::fabs(L[2] - L[1]);
  CHECK(d2 < 0.35 * d1);
  CHECK(L[2] > 0.0);
}

TEST_CASE("scalar ground state for the example family and lambda > 0") {
  const auto& g = grid31();
  const auto ex = CoefficientFamily::example(1.0);
  for (double lambda : {0.0, 5.0, -3.0}) {
    const auto s = scalar_ground_state(1, params(0.0, 0.0, lambda), ex, g);
    INFO("lambda=" << lambda);
    CHECK(s.residual <= 1e-8);
    CHECK(s.L > 0.0);
    CHECK(s.nonnegative);
    CHECK(s.L >= s.lower_bound);
    CHECK(std::fabs(s.nehari) <= 1e-9 * (s.L + 1.0));
  }
}

TEST_CASE("scalar ground state rejects inadmissible lambda") {
  const auto& g = grid31();
  // nu mu1 is about 2 pi^2 for the identity family
  CHECK_THROWS_AS(scalar_ground_state(0, params(0.0, 25.0), CoefficientFamily::identity(), g),
                  InadmissibleLambda);
  CHECK_THROWS_AS(scalar_ground_state(2, params(0.0), CoefficientFamily::identity(), g),
                  InvalidParams);
}

TEST_CASE("semi-trivial pair is not on the Nehari set") {
  const auto& g = grid31();
  const auto id = CoefficientFamily::identity();
  const auto s = scalar_ground_state(0, params(0.0), id, g);
  const StatePair u(s.z, ScalarField(g));
  const auto r = nehari_residual(u, params(-2.0), id, id, g);
  CHECK(std::fabs(r.r1) < 1e-8);
  CHECK_FALSE(on_nehari(u, r, 1e-6));
}

TEST_CASE("competitive solution at beta = -2") {
  const auto& g = grid31();
  const auto ex = CoefficientFamily::example(1.0);
  const auto sol = competitive_least_energy(params(-2.0), ex, ex, g);
  const auto& r = sol.report;
  CHECK(r.regime == Regime::competitive);
  CHECK(r.fully_nontrivial);
  CHECK(r.nonnegative);
  CHECK(r.euler_residual_norm <= 1e-8);
  CHECK(r.nehari_residual.max_abs() <= 1e-8);
  CHECK(r.floors_hold);
  CHECK(r.coercivity_holds);
  CHECK(r.energy == Catch::Approx(total_energy(sol.u, params(-2.0), ex, ex, g)).epsilon(1e-14));
  // floors recomputed independently; with lambda = 0 they read nu int |grad u|^2 <= int |u|^p
  for (int i = 0; i < 2; ++i) {
    const auto m = moments(sol.u[i], 4.0, g);
    CHECK(ex.nu() * m.grad_sq <= m.lp + 1e-9);
  }
  CHECK(r.energy > r.L1 + r.L2);
  CHECK_THROWS_AS(competitive_least_energy(params(1.0), ex, ex, g), InvalidParams);
}

TEST_CASE("decoupled system equals the sum of the scalar levels") {
  const auto& g = grid31();
  const auto id = CoefficientFamily::identity();
  const auto sol = solve_system(params(0.0), id, id, g);
  CHECK(sol.report.regime == Regime::decoupled);
  CHECK(sol.report.energy ==
        Catch::Approx(sol.report.L1 + sol.report.L2).epsilon(1e-8));
  const auto o = oracle::semilinear_ground_state(g, 0.0, 4.0);
  CHECK(std::fabs(sol.report.L1 - o.energy) <= 5e-3 * o.energy);
}

TEST_CASE("competitive energy tends to the decoupled level as beta -> 0-") {
  // the gap is first order in beta, so it is checked by extrapolation
  const auto& g = grid31();
  const auto id = CoefficientFamily::identity();
  const auto rows = beta_sweep({-0.5, -0.1, -0.01}, params(0.0), id, id, g);
  std::vector<double> gap;
  for (const auto& r : rows) {
    REQUIRE(r.status == "ok");
    gap.push_back(r.report.energy - (r.report.L1 + r.report.L2));
  }
  const double total = rows[0].report.L1 + rows[0].report.L2;
  CHECK(gap[0] > gap[1]);
  CHECK(gap[1] > gap[2]);
  CHECK(gap[2] > 0.0);
  // linear extrapolation through the two smallest |beta|
  const double slope = (gap[1] - gap[2]) / (0.1 - 0.01);
  const double intercept = gap[2] - slope * 0.01;
  CHECK(std::fabs(intercept) <= 0.01 * total);
}

TEST_CASE("cooperative regime below the semi-trivial level") {
  const auto& g = grid31();
  const auto id = CoefficientFamily::identity();
  const auto rows = beta_sweep({5.0, 10.0, 20.0, 40.0}, params(0.0), id, id, g);
  std::vector<double> lp, b;
  for (const auto& r : rows) {
    INFO("beta=" << r.beta);
    REQUIRE(r.status == "ok");
    CHECK(r.report.regime == Regime::cooperative);
    CHECK(r.report.fully_nontrivial);
    CHECK(r.report.below_semitrivial);
    CHECK(r.report.euler_residual_norm <= 1e-8);
    lp.push_back(r.report.diag_lp);
    b.push_back(r.beta);
  }
  for (std::size_t k = 1; k < lp.size(); ++k) CHECK(lp[k] < lp[k - 1]);
  // least squares slope of log lp against log beta
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < lp.size(); ++k) {
    mx += std::log(b[k]) / lp.size();
    my += std::log(lp[k]) / lp.size();
  }
  double sxy = 0, sxx = 0;
  for (std::size_t k = 0; k < lp.size(); ++k) {
    sxy += (std::log(b[k]) - mx) * (std::log(lp[k]) - my);
    sxx += (std::log(b[k]) - mx) * (std::log(b[k]) - mx);
  }
  CHECK(sxy / sxx <= -0.9);
  // identity family: w = z / sqrt(1 + beta) exactly, so int w^4 = int z^4 / (1 + beta)^2
  const auto z = scalar_ground_state(0, params(0.0), id, g);
  const double z4 = moments(z.z, 4.0, g).lp;
  for (std::size_t k = 0; k < lp.size(); ++k)
    CHECK(lp[k] == Catch::Approx(z4 / ((1 + b[k]) * (1 + b[k]))).epsilon(1e-7));
}

TEST_CASE("sweep rows") {
  const auto& g = grid31();
  const auto ex = CoefficientFamily::example(1.0);
  SECTION("beta = 0 gives the decoupled level") {
    const auto rows = beta_sweep({0.0}, params(0.0), ex, ex, g);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].report.energy ==
          Catch::Approx(rows[0].report.L1 + rows[0].report.L2).epsilon(1e-8));
  }
  SECTION("competitive rows") {
    const auto rows = beta_sweep({-2.0, -4.0, -8.0}, params(0.0), ex, ex, g);
    for (const auto& r : rows) {
      INFO("beta=" << r.beta);
      CHECK(r.status == "ok");
      CHECK(r.report.fully_nontrivial);
      CHECK(r.report.nonnegative);
    }
  }
  SECTION("failures become row markers") {
    SolverOptions o;
    o.tol = 1e-300;
    o.max_iter = 5;
    const auto rows = beta_sweep({-2.0, 3.0}, params(0.0), ex, ex, g, o);
    REQUIRE(rows.size() == 2);
    for (const auto& r : rows) CHECK(r.status == "no_convergence");
  }
  CHECK_THROWS_AS(beta_sweep({std::nan("")}, params(0.0), ex, ex, g), InvalidParams);
}

TEST_CASE("refine_solution contract") {
  const auto& g = grid31();
  const auto id = CoefficientFamily::identity();
  SECTION("zero state") {
    const auto [u, res] = refine_solution(StatePair(g), params(-2.0), id, id, g);
    CHECK(res == 0.0);
    CHECK(u == StatePair(g));
  }
  SECTION("scalar ground-state pair at beta = 0") {
    const auto z = scalar_ground_state(0, params(0.0), id, g);
    const StatePair u0(z.z, z.z);
    const double e0 = total_energy(u0, params(0.0), id, id, g);
    const auto [u, res] = refine_solution(u0, params(0.0), id, id, g);
    CHECK(res < 1e-10);
    CHECK(total_energy(u, params(0.0), id, id, g) <= e0 + 1e-12 * e0);
  }
  SECTION("competitive output does not get worse") {
    const auto sol = competitive_least_energy(params(-2.0), id, id, g);
    const auto [u, res] = refine_solution(sol.u, params(-2.0), id, id, g);
    CHECK(res <= sol.report.euler_residual_norm);
    CHECK(total_energy(u, params(-2.0), id, id, g) <=
          sol.report.energy + 1e-12 * sol.report.energy);
  }
  SECTION("semi-trivial state") {
    const auto z = scalar_ground_state(0, params(0.0), id, g);
    // z is a critical point of the fiber maximum, so from 0.9 z the polish
    // cannot climb to it; the contract is that nothing gets worse
    const StatePair u0(0.9 * z.z, ScalarField(g));
    const double r0 = residual_norm(euler_gradient(u0, params(-2.0), id, id, g), g);
    const double e0 = total_energy(u0, params(-2.0), id, id, g);
    const auto [u, res] = refine_solution(u0, params(-2.0), id, id, g);
    CHECK(res <= r0);
    CHECK(total_energy(u, params(-2.0), id, id, g) <= e0 + 1e-12 * e0);
    CHECK_FALSE(any_nonzero(u.u2));
    const StatePair u1(z.z, ScalarField(g));
    const auto [v, rv] = refine_solution(u1, params(-2.0), id, id, g);
    CHECK(rv < 1e-8);
    CHECK_FALSE(any_nonzero(v.u2));
  }
}

TEST_CASE("swap equivariance and determinism") {
  const auto& g = grid31();
  const auto ex = CoefficientFamily::example(1.0);
  const auto id = CoefficientFamily::identity();
  const ProblemParams pp = params(-2.0, 0.0, 3.0);
  SolverOptions o;
  o.seed = 11;
  const auto a = solve_system(pp, ex, id, g, o);
  const auto a2 = solve_system(pp, ex, id, g, o);
  CHECK(a.u == a2.u);
  CHECK(a.report.energy == a2.report.energy);

  SolverOptions os = o;
  os.swap_seeds = true;
  const auto b = solve_system(pp.swapped(), id, ex, g, os);
  CHECK(std::fabs(a.report.energy - b.report.energy) <= 1e-10 * std::fabs(a.report.energy));
  CHECK(sup_diff(a.u.u1, b.u.u2) < 1e-8);
  CHECK(sup_diff(a.u.u2, b.u.u1) < 1e-8);
  CHECK(a.report.L1 == Catch::Approx(b.report.L2).epsilon(1e-10));
}
