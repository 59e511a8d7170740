#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "qlsys/energy.hpp"
#include "qlsys/error.hpp"
#include "qlsys/grid.hpp"
#include "qlsys/poisson.hpp"

namespace qlsys {

/// Principal Dirichlet eigenpair of the 5-point Laplacian.
struct EigenPair {
  double mu = 0.0;
  ScalarField phi;  ///< positive, unit nodal L2 norm
  int iterations = 0;
  double residual = 0.0;  ///< nodal L2 norm of (-Lap_h) phi - mu phi
};

/// Closed-form smallest eigenvalue of the 5-point stencil on a rectangle.
inline double stencil_mu1_exact(const Grid& g) {
  const double pi = std::numbers::pi;
  return 4.0 / (g.hx() * g.hx()) * std::pow(std::sin(0.5 * pi * g.hx() / g.lx()), 2) +
         4.0 / (g.hy() * g.hy()) * std::pow(std::sin(0.5 * pi * g.hy() / g.ly()), 2);
}

/// Inverse power iteration with a CG inner solve (relative tolerance 1e-12).
/// Stops once the eigenvalue increment and the eigen-residual are both below
/// tol relative to mu.
inline EigenPair principal_eigenpair(const Grid& g, double tol = 1e-10, int max_iter = 500) {
  const std::size_t n = g.node_count();
  auto lap = [&g](std::span<const double> x, std::span<double> y) {
    apply_laplacian_5pt(g, x, y);
  };
  // positive separable start
  std::vector<double> x(n), y(n), lx(n);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const double sx = g.x(i) / g.lx(), sy = g.y(j) / g.ly();
      x[g.index(i, j)] = sx * (1.0 - sx) * sy * (1.0 - sy);
    }
  auto normalize = [&](std::vector<double>& v) {
    const double nrm = nodal_l2(v, g);
    for (double& e : v) e /= nrm;
  };
  normalize(x);

  double mu = 0.0;
  EigenPair out;
  for (int it = 1; it <= max_iter; ++it) {
    // warm start: x / mu approximates the solution of L y = x
    for (std::size_t k = 0; k < n; ++k) y[k] = mu > 0.0 ? x[k] / mu : 0.0;
    conjugate_gradient(lap, x, y, 1e-12, 20 * static_cast<int>(n));
    x = y;
    normalize(x);
    lap(x, lx);
    const double mu_new = dot(x, lx) / dot(x, x);
    double res = 0.0;
    for (std::size_t k = 0; k < n; ++k) res += std::pow(lx[k] - mu_new * x[k], 2);
    res = std::sqrt(res * g.cell_volume());
    const bool done = mu > 0.0 && std::fabs(mu_new - mu) <= tol * mu_new && res <= tol * mu_new;
    mu = mu_new;
    if (done) {
      out.mu = mu;
      out.iterations = it;
      out.residual = res;
      break;
    }
    if (it == max_iter) throw NoConvergence("principal eigenpair", max_iter);
  }
  if (std::accumulate(x.begin(), x.end(), 0.0) < 0.0)
    for (double& e : x) e = -e;
  out.phi = ScalarField(g, x);
  return out;
}

enum class Admissibility { admissible, admissible_weak, inadmissible };

inline const char* to_string(Admissibility a) {
  switch (a) {
    case Admissibility::admissible: return "admissible";
    case Admissibility::admissible_weak: return "admissible_weak";
    case Admissibility::inadmissible: return "inadmissible";
  }
  return "?";
}

/// ((p - 2 - gamma) / (p - 2)) nu mu1.
inline double admissibility_threshold(double p, double gamma, double nu, double mu1) {
  return (p - 2.0 - gamma) / (p - 2.0) * nu * mu1;
}

inline Admissibility admissible(double lambda1, double lambda2, double p, double gamma,
                                double nu, double mu1) {
  const double strong = admissibility_threshold(p, gamma, nu, mu1);
  const double weak = nu * mu1;
  if (lambda1 < strong && lambda2 < strong) return Admissibility::admissible;
  if (lambda1 < weak && lambda2 < weak) return Admissibility::admissible_weak;
  return Admissibility::inadmissible;
}

inline Admissibility admissible(const ProblemParams& pp, double nu, double gamma, double mu1) {
  return admissible(pp.lambda1, pp.lambda2, pp.p, gamma, nu, mu1);
}

/// The smaller of the stencil and quadrature eigenvalues, so that every
/// theorem-side inequality built on it is on the safe side.
inline double conservative_mu1(const Grid& g, const EigenPair& eig) {
  return std::min(eig.mu, StiffnessInverse::quadrature_mu1(g));
}

}  // namespace qlsys
