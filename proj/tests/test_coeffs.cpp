#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "qlsys/coeffs.hpp"

using namespace qlsys;
using Catch::Approx;

TEST_CASE("identity profile") {
  auto f = CoefficientFamily::identity();
  CHECK(eval_A(f, 7.3) == 1.0);
  CHECK(eval_A(f, -2.0) == 1.0);
  CHECK(eval_dA(f, 4.1) == 0.0);
  CHECK(f.is_constant());
}

TEST_CASE("example profile values") {
  auto f = CoefficientFamily::example(2.0);
  CHECK(eval_A(f, 1.0) == Approx(1.5).epsilon(1e-15));
  CHECK(eval_dA(f, 1.0) == Approx(0.5).epsilon(1e-15));
  CHECK(eval_dA(f, -1.0) == Approx(-0.5).epsilon(1e-15));
  for (double s : {1e3, -1e3, 1e8, -1e8, 1e-4, 0.0}) {
    CHECK(eval_A(f, s) >= 1.0);
    CHECK(eval_A(f, s) <= 2.0);
  }
  auto g1 = CoefficientFamily::example(0.5);
  CHECK(eval_dA(g1, 0.0) == 0.0);
  CHECK_THROWS_AS(CoefficientFamily::example(0.0), InvalidParams);
}

TEST_CASE("example derivative matches finite differences") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> d(0.05, 6.0);
  for (double gamma : {0.5, 1.0, 1.5, 2.0, 3.0}) {
    auto f = CoefficientFamily::example(gamma);
    for (int k = 0; k < 50; ++k) {
      const double s = (k % 2 ? -1.0 : 1.0) * d(rng);
      const double h = 1e-6 * (1.0 + std::fabs(s));
      const double fd = (f.A(s + h) - f.A(s - h)) / (2.0 * h);
      CHECK(f.dA(s) == Approx(fd).epsilon(1e-7).margin(1e-9));
    }
  }
}

TEST_CASE("derivative is odd for even profiles") {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> d(-20.0, 20.0);
  auto poly = CoefficientFamily::polynomial({1.0, 0.3, 0.2}, 1.0, 1e6, 1.5);
  for (auto f : {CoefficientFamily::example(1.0), CoefficientFamily::example(2.5), poly}) {
    for (int k = 0; k < 100; ++k) {
      const double s = d(rng);
      CHECK(f.dA(-s) == -f.dA(s));
      CHECK(f.A(-s) == f.A(s));
    }
  }
}

TEST_CASE("example derivative bound") {
  // brute-force supremum of |a'| on a fine log grid
  for (double gamma : {1.0, 1.5, 2.0, 3.0}) {
    auto f = CoefficientFamily::example(gamma);
    double sup = 0.0;
    for (int k = 0; k <= 200000; ++k) {
      const double s = std::pow(10.0, -9.0 + 13.0 * k / 200000.0);
      sup = std::max(sup, std::fabs(f.dA(s)));
    }
    CHECK(CoefficientFamily::example_derivative_bound(gamma) == Approx(sup).epsilon(1e-6));
  }
  CHECK(std::isinf(CoefficientFamily::example_derivative_bound(0.5)));
}

TEST_CASE("certify the example family at gamma = 1") {
  auto rep = certify(CoefficientFamily::example(1.0), 4.0, -10.0, 10.0, 10000);
  CHECK(rep.all_pass());
  for (const auto& c : rep.conditions) CHECK(c.verdict == Verdict::pass);
  CHECK(rep.max_growth_ratio <= 0.5 + 1e-6);
  CHECK(rep.max_growth_ratio > 0.1);
  CHECK(rep.samples == 10000u);
}

TEST_CASE("certify identity reports degenerate monotonicity") {
  for (double p : {2.5, 4.0, 7.0}) {
    auto rep = certify(CoefficientFamily::identity(), p, -5.0, 5.0, 500);
    CHECK(rep.all_pass());
    CHECK(rep["a4_monotone"].verdict == Verdict::pass_degenerate);
    CHECK(std::string(to_string(rep["a4_monotone"].verdict)) == "pass(degenerate)");
  }
}

TEST_CASE("planted failure carries a witness") {
  auto planted = CoefficientFamily::polynomial({1.0, 0.0, 1.0}, 1.0, 1000.0, 1.5);
  auto rep = certify(planted, 4.0, -10.0, 10.0, 2000);
  CHECK_FALSE(rep.all_pass());
  const auto& a3 = rep["a3_growth"];
  REQUIRE(a3.verdict == Verdict::fail);
  const double s = a3.witness_s;
  REQUIRE(std::isfinite(s));
  // 2 s^2 / (1 + s^2) > 1.5 exactly when |s| > sqrt(3)
  CHECK(s * planted.dA(s) > 1.5 * planted.A(s));
  CHECK(std::fabs(s) > std::sqrt(3.0));
  for (const auto& c : rep.conditions)
    if (c.verdict == Verdict::fail) CHECK(std::isfinite(c.witness_s));
}

TEST_CASE("example passes whenever gamma sits in the window") {
  // gamma < 1 has an unbounded derivative at the origin, so the bound fails;
  // the window property is checked for gamma >= 1
  for (double p : {3.5, 4.0, 5.0, 8.0})
    for (double gamma : {1.0, 1.2, 2.0, 4.5}) {
      if (!(gamma < p - 2.0)) continue;
      auto rep = certify(CoefficientFamily::example(gamma), p, -7.0, 7.0, 1001);
      INFO("p=" << p << " gamma=" << gamma);
      CHECK(rep.all_pass());
    }
  auto rough = certify(CoefficientFamily::example(0.5), 4.0, -1.0, 1.0, 1001);
  CHECK(rough["a1_bound"].verdict == Verdict::fail);
  auto out_of_window = certify(CoefficientFamily::example(2.5), 4.0, -3.0, 3.0, 200);
  CHECK(out_of_window["a3_window"].verdict == Verdict::fail);
}

TEST_CASE("certification is monotone in the sample set") {
  auto planted = CoefficientFamily::polynomial({1.0, 0.0, 1.0}, 1.0, 1000.0, 1.5);
  std::vector<double> coarse, fine;
  for (int k = 0; k <= 100; ++k) coarse.push_back(-5.0 + 0.1 * k);
  fine = coarse;
  for (int k = 0; k < 100; ++k) fine.push_back(-4.95 + 0.1 * k);
  auto a = certify_samples(planted, 4.0, coarse);
  auto b = certify_samples(planted, 4.0, fine);
  for (std::size_t c = 0; c < a.conditions.size(); ++c)
    if (a.conditions[c].verdict == Verdict::fail) CHECK(b.conditions[c].verdict == Verdict::fail);
}

TEST_CASE("certify argument errors") {
  auto f = CoefficientFamily::example(1.0);
  CHECK_THROWS_AS(certify(f, 4.0, 1.0, 1.0, 200), InvalidRange);
  CHECK_THROWS_AS(certify(f, 4.0, -1.0, 1.0, 99), InvalidRange);
  auto bad = CoefficientFamily::custom(
      "log", [](double s) { return 1.0 + std::log(std::fabs(s)); },
      [](double s) { return 1.0 / s; }, 1.0, 10.0, 1.0, true);
  CHECK_THROWS_AS(certify(bad, 4.0, -1.0, 1.0, 101), NonFiniteSample);
}
