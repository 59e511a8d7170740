#pragma once

// Discrete energy of the coupled quasilinear system
//
//   J(u) = sum_i [ 1/2 int a_i(u_i)|grad u_i|^2 - lambda_i/2 int u_i^2 - 1/p int |u_i|^p ]
//          - 2 beta / p int |u_1|^(p/2) |u_2|^(p/2)
//
// with every integral evaluated by the cell-center rule of grid.hpp. The
// coefficient is evaluated at the interpolated cell value, so the discrete
// energy is an exactly differentiable function of the nodal values and the
// gradient below is its exact derivative.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "qlsys/coeffs.hpp"
#include "qlsys/error.hpp"
#include "qlsys/grid.hpp"

namespace qlsys {

struct ProblemParams {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double beta = 0.0;
  double p = 4.0;
  double gamma = 1.0;

  double lambda(int i) const noexcept { return i == 0 ? lambda1 : lambda2; }
  ProblemParams swapped() const { return {lambda2, lambda1, beta, p, gamma}; }
  friend bool operator==(const ProblemParams&, const ProblemParams&) = default;
};

inline void validate(const ProblemParams& pp) {
  if (!(pp.p > 2.0) || !std::isfinite(pp.p)) throw InvalidParams("p must be a finite real > 2");
  if (!(pp.gamma > 0.0 && pp.gamma < pp.p - 2.0))
    throw InvalidParams("gamma must lie in (0, p - 2)");
  if (!std::isfinite(pp.lambda1) || !std::isfinite(pp.lambda2) || !std::isfinite(pp.beta))
    throw InvalidParams("lambda and beta must be finite");
}

struct NehariResidual {
  double r1 = 0.0;
  double r2 = 0.0;
  double max_abs() const noexcept { return std::max(std::fabs(r1), std::fabs(r2)); }
};

/// G(t1, t2) = (|t1|^p + 2 beta |t1|^(p/2) |t2|^(p/2) + |t2|^p) / p.
inline double coupling_G(double t1, double t2, const ProblemParams& pp) noexcept {
  const double p = pp.p;
  return ((pow_abs(t1, p) + pow_abs(t2, p)) +
          2.0 * pp.beta * (pow_abs(t1, 0.5 * p) * pow_abs(t2, 0.5 * p))) /
         p;
}

/// Gradient of coupling_G.
inline std::array<double, 2> coupling_grad_g(double t1, double t2,
                                             const ProblemParams& pp) noexcept {
  const double p = pp.p;
  const double h1 = pow_abs(t1, 0.5 * p);
  const double h2 = pow_abs(t2, 0.5 * p);
  return {signed_pow(t1, p - 1.0) + pp.beta * signed_pow(t1, 0.5 * p - 1.0) * h2,
          signed_pow(t2, p - 1.0) + pp.beta * signed_pow(t2, 0.5 * p - 1.0) * h1};
}

namespace detail {

/// Energy density of a single component at a cell (no coupling).
inline double component_density(const CoefficientFamily& fam, const CellSample& s,
                                 double lambda, double kappa, double p) {
  const double g2 = s.gx * s.gx + s.gy * s.gy;
  return 0.5 * fam.A(s.value) * g2 - 0.5 * lambda * s.value * s.value -
         kappa * pow_abs(s.value, p) / p;
}

inline double pair_energy(const Grid& g, std::span<const double> u1, std::span<const double> u2,
                          const ProblemParams& pp, const CoefficientFamily& f1,
                          const CoefficientFamily& f2) {
  const double p = pp.p;
  const double cross = 2.0 * pp.beta / p;
  CompensatedSum acc;
  for (const Cell& c : g.cells()) {
    const auto s1 = g.sample(u1, c);
    const auto s2 = g.sample(u2, c);
    acc += component_density(f1, s1, pp.lambda1, 1.0, p) +
           component_density(f2, s2, pp.lambda2, 1.0, p) -
           cross * pow_abs(s1.value, 0.5 * p) * pow_abs(s2.value, 0.5 * p);
  }
  return acc.value() * g.cell_volume();
}

/// Nodal derivative dJ/du (not volume-scaled) of the pair energy.
inline void pair_gradient(const Grid& g, std::span<const double> u1, std::span<const double> u2,
                          const ProblemParams& pp, const CoefficientFamily& f1,
                          const CoefficientFamily& f2, std::span<double> d1,
                          std::span<double> d2) {
  std::fill(d1.begin(), d1.end(), 0.0);
  std::fill(d2.begin(), d2.end(), 0.0);
  const double vol = g.cell_volume();
  for (const Cell& c : g.cells()) {
    const auto s1 = g.sample(u1, c);
    const auto s2 = g.sample(u2, c);
    const auto gb = coupling_grad_g(s1.value, s2.value, pp);
    const double g1sq = s1.gx * s1.gx + s1.gy * s1.gy;
    const double g2sq = s2.gx * s2.gx + s2.gy * s2.gy;
    const double a1 = f1.A(s1.value);
    const double a2 = f2.A(s2.value);
    const double dm1 = 0.5 * f1.dA(s1.value) * g1sq - pp.lambda1 * s1.value - gb[0];
    const double dm2 = 0.5 * f2.dA(s2.value) * g2sq - pp.lambda2 * s2.value - gb[1];
    g.scatter(d1, c, vol * dm1, vol * a1 * s1.gx, vol * a1 * s1.gy);
    g.scatter(d2, c, vol * dm2, vol * a2 * s2.gx, vol * a2 * s2.gy);
  }
}

/// Single-component energy with the power term weighted by kappa.
inline double single_energy(const Grid& g, std::span<const double> z, double lambda,
                            double kappa, double p, const CoefficientFamily& f) {
  CompensatedSum acc;
  for (const Cell& c : g.cells()) acc += component_density(f, g.sample(z, c), lambda, kappa, p);
  return acc.value() * g.cell_volume();
}

inline void single_gradient(const Grid& g, std::span<const double> z, double lambda,
                            double kappa, double p, const CoefficientFamily& f,
                            std::span<double> d) {
  std::fill(d.begin(), d.end(), 0.0);
  const double vol = g.cell_volume();
  for (const Cell& c : g.cells()) {
    const auto s = g.sample(z, c);
    const double g2 = s.gx * s.gx + s.gy * s.gy;
    const double a = f.A(s.value);
    const double dm =
        0.5 * f.dA(s.value) * g2 - lambda * s.value - kappa * signed_pow(s.value, p - 1.0);
    g.scatter(d, c, vol * dm, vol * a * s.gx, vol * a * s.gy);
  }
}

/// Per-component pairing <J'(u), (u_i, 0)> assembled cellwise.
inline NehariResidual pair_nehari(const Grid& g, std::span<const double> u1,
                                  std::span<const double> u2, const ProblemParams& pp,
                                  const CoefficientFamily& f1, const CoefficientFamily& f2) {
  const double p = pp.p;
  CompensatedSum r1, r2;
  for (const Cell& c : g.cells()) {
    const auto s1 = g.sample(u1, c);
    const auto s2 = g.sample(u2, c);
    const double g1sq = s1.gx * s1.gx + s1.gy * s1.gy;
    const double g2sq = s2.gx * s2.gx + s2.gy * s2.gy;
    const double cross = pp.beta * pow_abs(s1.value, 0.5 * p) * pow_abs(s2.value, 0.5 * p);
    r1 += f1.A(s1.value) * g1sq + 0.5 * f1.dA(s1.value) * g1sq * s1.value -
          pp.lambda1 * s1.value * s1.value - pow_abs(s1.value, p) - cross;
    r2 += f2.A(s2.value) * g2sq + 0.5 * f2.dA(s2.value) * g2sq * s2.value -
          pp.lambda2 * s2.value * s2.value - pow_abs(s2.value, p) - cross;
  }
  return {r1.value() * g.cell_volume(), r2.value() * g.cell_volume()};
}

}  // namespace detail

inline double total_energy(const StatePair& u, const ProblemParams& pp,
                           const CoefficientFamily& f1, const CoefficientFamily& f2,
                           const Grid& g) {
  require_same_grid(g, u);
  return detail::pair_energy(g, u.u1.values, u.u2.values, pp, f1, f2);
}

/// I_i(z): the energy of the scalar problem for component i (0 or 1).
inline double scalar_energy(const ScalarField& z, int i, const ProblemParams& pp,
                            const CoefficientFamily& fam, const Grid& g) {
  require_same_grid(g, z);
  return detail::single_energy(g, z.values, pp.lambda(i), 1.0, pp.p, fam);
}

/// Exact derivative of total_energy divided by the nodal volume hx hy.
inline StatePair euler_gradient(const StatePair& u, const ProblemParams& pp,
                                const CoefficientFamily& f1, const CoefficientFamily& f2,
                                const Grid& g) {
  require_same_grid(g, u);
  StatePair d(g);
  detail::pair_gradient(g, u.u1.values, u.u2.values, pp, f1, f2, d.u1.values, d.u2.values);
  const double inv = 1.0 / g.cell_volume();
  d.u1 *= inv;
  d.u2 *= inv;
  return d;
}

/// Function-space L2 norm of a volume-scaled gradient pair.
inline double residual_norm(const StatePair& grad, const Grid& g) {
  const double a = nodal_l2(grad.u1.values, g);
  const double b = nodal_l2(grad.u2.values, g);
  return std::sqrt(a * a + b * b);
}

inline NehariResidual nehari_residual(const StatePair& u, const ProblemParams& pp,
                                      const CoefficientFamily& f1, const CoefficientFamily& f2,
                                      const Grid& g) {
  require_same_grid(g, u);
  return detail::pair_nehari(g, u.u1.values, u.u2.values, pp, f1, f2);
}

/// Both constraint values within tol and both components nontrivial.
inline bool on_nehari(const StatePair& u, const NehariResidual& r, double tol) {
  auto nonzero = [](const ScalarField& f) {
    return std::any_of(f.values.begin(), f.values.end(), [](double v) { return v != 0.0; });
  };
  return r.max_abs() <= tol && nonzero(u.u1) && nonzero(u.u2);
}

/// Integral moments used by reports and the floor and coercivity checks.
struct ComponentMoments {
  double grad_sq = 0.0;   ///< int |grad u|^2
  double mass = 0.0;      ///< int u^2
  double lp = 0.0;        ///< int |u|^p
};

inline ComponentMoments moments(const ScalarField& f, double p, const Grid& g) {
  require_same_grid(g, f);
  ComponentMoments m;
  for (const Cell& c : g.cells()) {
    const auto s = g.sample(f.values, c);
    m.grad_sq += s.gx * s.gx + s.gy * s.gy;
    m.mass += s.value * s.value;
    m.lp += pow_abs(s.value, p);
  }
  const double vol = g.cell_volume();
  m.grad_sq *= vol;
  m.mass *= vol;
  m.lp *= vol;
  return m;
}

inline double cross_moment(const StatePair& u, double p, const Grid& g) {
  require_same_grid(g, u);
  double acc = 0.0;
  for (const Cell& c : g.cells())
    acc += pow_abs(g.sample(u.u1.values, c).value, 0.5 * p) *
           pow_abs(g.sample(u.u2.values, c).value, 0.5 * p);
  return acc * g.cell_volume();
}

}  // namespace qlsys
