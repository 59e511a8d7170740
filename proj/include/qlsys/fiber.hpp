#pragma once

// The fibering map h_u(t) = J(t1 u1, t2 u2) on the open quadrant t > 0, its
// maximizer t_u, and the projection u -> t_u u onto the Nehari set.
//
// FiberModel caches the per-cell interpolated values and gradient magnitudes
// of u once, after which h_u, its gradient and the per-component Nehari
// residuals t_i dh/dt_i are evaluated without touching the grid again.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qlsys/coeffs.hpp"
#include "qlsys/energy.hpp"
#include "qlsys/error.hpp"
#include "qlsys/grid.hpp"

namespace qlsys {

struct FiberPoint {
  double t1 = 1.0;
  double t2 = 1.0;

  double operator[](int i) const noexcept { return i == 0 ? t1 : t2; }
  double& operator[](int i) noexcept { return i == 0 ? t1 : t2; }
  friend bool operator==(const FiberPoint&, const FiberPoint&) = default;
};

inline bool any_nonzero(const ScalarField& f) {
  return std::any_of(f.values.begin(), f.values.end(), [](double v) { return v != 0.0; });
}

inline StatePair scaled(const StatePair& u, FiberPoint t) {
  return StatePair(t.t1 * u.u1, t.t2 * u.u2);
}

namespace detail {

// Cell data of one component plus the integrals that do not depend on t.
struct FiberComponent {
  CoefficientFamily fam;
  double lambda = 0.0;
  std::vector<double> m;    // cell-center values
  std::vector<double> gsq;  // |grad|^2 at cell centers
  double mass = 0.0;        // int m^2
  double lp = 0.0;          // int |m|^p
  double grad = 0.0;        // int |grad|^2
  double vol = 0.0;

  FiberComponent(const ScalarField& f, const CoefficientFamily& fam_, double lambda_, double p,
                 const Grid& g)
      : fam(fam_), lambda(lambda_), vol(g.cell_volume()) {
    m.reserve(g.cell_count());
    gsq.reserve(g.cell_count());
    for (const Cell& c : g.cells()) {
      const auto s = g.sample(f.values, c);
      m.push_back(s.value);
      gsq.push_back(s.gx * s.gx + s.gy * s.gy);
      mass += s.value * s.value;
      lp += pow_abs(s.value, p);
      grad += s.gx * s.gx + s.gy * s.gy;
    }
    mass *= vol;
    lp *= vol;
    grad *= vol;
  }

  // Q(tau) = int A(tau m) |grad|^2
  double Q(double tau) const {
    if (fam.is_constant()) return fam.A(0.0) * grad;
    CompensatedSum acc;
    for (std::size_t c = 0; c < m.size(); ++c) acc += fam.A(tau * m[c]) * gsq[c];
    return acc.value() * vol;
  }

  // Q'(tau) = int A'(tau m) m |grad|^2
  double dQ(double tau) const {
    if (fam.is_constant()) return 0.0;
    CompensatedSum acc;
    for (std::size_t c = 0; c < m.size(); ++c) acc += fam.dA(tau * m[c]) * m[c] * gsq[c];
    return acc.value() * vol;
  }
};

}  // namespace detail

class FiberModel {
 public:
  FiberModel(const StatePair& u, const ProblemParams& pp, const CoefficientFamily& f1,
             const CoefficientFamily& f2, const Grid& g)
      : pp_(pp),
        c_{detail::FiberComponent(u.u1, f1, pp.lambda1, pp.p, g),
           detail::FiberComponent(u.u2, f2, pp.lambda2, pp.p, g)} {
    require_same_grid(g, u);
    const double p = pp.p;
    for (std::size_t k = 0; k < c_[0].m.size(); ++k)
      cross_ += pow_abs(c_[0].m[k], 0.5 * p) * pow_abs(c_[1].m[k], 0.5 * p);
    cross_ *= g.cell_volume();
  }

  const ProblemParams& params() const noexcept { return pp_; }
  double lp(int i) const noexcept { return c_[i].lp; }
  double mass(int i) const noexcept { return c_[i].mass; }
  double grad_sq(int i) const noexcept { return c_[i].grad; }
  double cross() const noexcept { return cross_; }
  double Q(int i, double tau) const { return c_[i].Q(tau); }
  double dQ(int i, double tau) const { return c_[i].dQ(tau); }

  /// Scale-invariant part of the membership test: some rescaling makes both
  /// int |t_i u_i|^p + beta int |t1 u1|^(p/2) |t2 u2|^(p/2) positive.
  bool projectable() const noexcept {
    if (!(c_[0].lp > 0.0 && c_[1].lp > 0.0)) return false;
    if (pp_.beta >= 0.0) return true;
    return c_[0].lp * c_[1].lp > pp_.beta * pp_.beta * cross_ * cross_;
  }

  /// Single-component part of h: 1/2 t^2 Q(t) - lambda/2 t^2 M - t^p B / p.
  double component_value(int i, double t, double q) const noexcept {
    const auto& c = c_[i];
    return 0.5 * t * t * (q - c.lambda * c.mass) - pow_abs(t, pp_.p) * c.lp / pp_.p;
  }
  double component_derivative(int i, double t, double q, double dq) const noexcept {
    const auto& c = c_[i];
    return t * (q - c.lambda * c.mass) + 0.5 * t * t * dq - pow_abs(t, pp_.p - 1.0) * c.lp;
  }
  double coupling_value(FiberPoint t) const noexcept {
    return 2.0 * pp_.beta / pp_.p * pow_abs(t.t1 * t.t2, 0.5 * pp_.p) * cross_;
  }

  double value(FiberPoint t) const {
    return component_value(0, t.t1, Q(0, t.t1)) + component_value(1, t.t2, Q(1, t.t2)) -
           coupling_value(t);
  }

  std::array<double, 2> gradient(FiberPoint t) const {
    const double hp = 0.5 * pp_.p;
    std::array<double, 2> out{};
    for (int i = 0; i < 2; ++i) {
      const double ti = t[i], tj = t[1 - i];
      out[i] = component_derivative(i, ti, Q(i, ti), dQ(i, ti)) -
               pp_.beta * pow_abs(ti, hp - 1.0) * pow_abs(tj, hp) * cross_;
    }
    return out;
  }

  /// Nehari residuals of the rescaled pair: r_i(t u) = t_i dh/dt_i.
  NehariResidual residual(FiberPoint t) const {
    const auto gr = gradient(t);
    return {t.t1 * gr[0], t.t2 * gr[1]};
  }

  /// Hessian in the log variables s = log t, row-major 2x2.
  /// The mixed term is exact; the diagonal differentiates t_i dh/dt_i numerically.
  std::array<double, 4> log_hessian(FiberPoint t) const {
    const double hp = 0.5 * pp_.p;
    const double mixed = -pp_.beta * hp * pow_abs(t.t1 * t.t2, hp) * cross_;
    std::array<double, 4> h{0.0, mixed, mixed, 0.0};
    for (int i = 0; i < 2; ++i) {
      const double eps = 1e-5;
      FiberPoint a = t, b = t;
      a[i] = t[i] * std::exp(eps);
      b[i] = t[i] * std::exp(-eps);
      const double ra = a[i] * gradient(a)[i];
      const double rb = b[i] * gradient(b)[i];
      h[3 * i] = (ra - rb) / (2.0 * eps);
    }
    return h;
  }

 private:
  ProblemParams pp_;
  std::array<detail::FiberComponent, 2> c_;
  double cross_ = 0.0;
};

/// h_u(t), evaluated as the total energy of the rescaled pair.
inline double fiber_value(const StatePair& u, FiberPoint t, const ProblemParams& pp,
                          const CoefficientFamily& f1, const CoefficientFamily& f2,
                          const Grid& g) {
  return total_energy(scaled(u, t), pp, f1, f2, g);
}

inline std::array<double, 2> fiber_gradient(const StatePair& u, FiberPoint t,
                                            const ProblemParams& pp, const CoefficientFamily& f1,
                                            const CoefficientFamily& f2, const Grid& g) {
  return FiberModel(u, pp, f1, f2, g).gradient(t);
}

enum class ProjectionStatus { interior_max, not_projectable };

inline const char* to_string(ProjectionStatus s) {
  return s == ProjectionStatus::interior_max ? "interior_max" : "not_projectable";
}

struct ProjectionOptions {
  double tol = 1e-10;  ///< on max |t_i dh/dt_i| relative to |h| + 1
  double t_min = 1e-3;
  double t_max = 1e3;
  int scan_points = 64;
  int max_newton = 100;
  /// Skip the scan and start Newton here; only taken when beta < 0, where any
  /// interior critical point is the global maximum.
  std::optional<FiberPoint> warm_start;
};

struct ProjectionResult {
  FiberPoint t;
  StatePair projected;
  NehariResidual residual;
  ProjectionStatus status = ProjectionStatus::not_projectable;
  double value = 0.0;  ///< h_u(t_u)
  int newton_iterations = 0;
  /// beta in [-1, 0): uniqueness still holds, projectability is not guaranteed.
  bool weak_competition = false;
};

namespace detail {

inline std::vector<double> log_axis(double lo, double hi, int n) {
  std::vector<double> t(n);
  const double a = std::log(lo), b = std::log(hi);
  for (int k = 0; k < n; ++k) t[k] = std::exp(a + (b - a) * k / (n - 1));
  return t;
}

struct ScanBest {
  FiberPoint t;
  double value = -std::numeric_limits<double>::infinity();
  bool on_boundary = true;
};

inline ScanBest scan_box(const FiberModel& fm, double lo, double hi, int n) {
  const auto tau = log_axis(lo, hi, n);
  std::array<std::vector<double>, 2> part;
  for (int i = 0; i < 2; ++i) {
    part[i].resize(n);
    for (int k = 0; k < n; ++k) part[i][k] = fm.component_value(i, tau[k], fm.Q(i, tau[k]));
  }
  ScanBest best;
  int bi = 0, bj = 0;
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const FiberPoint t{tau[i], tau[j]};
      const double h = part[0][i] + part[1][j] - fm.coupling_value(t);
      if (h > best.value) {
        best.value = h;
        best.t = t;
        bi = i;
        bj = j;
      }
    }
  best.on_boundary = bi == 0 || bj == 0 || bi == n - 1 || bj == n - 1;
  return best;
}

// Largest eigenvalue of a symmetric 2x2 matrix.
inline double sym2_max_eig(const std::array<double, 4>& h) {
  const double tr = 0.5 * (h[0] + h[3]);
  const double d = 0.5 * (h[0] - h[3]);
  return tr + std::sqrt(d * d + h[1] * h[1]);
}

inline double sym2_min_eig(const std::array<double, 4>& h) {
  const double tr = 0.5 * (h[0] + h[3]);
  const double d = 0.5 * (h[0] - h[3]);
  return tr - std::sqrt(d * d + h[1] * h[1]);
}

enum class NewtonMode { maximize, root };

struct NewtonOutcome {
  FiberPoint t;
  bool converged = false;
  int iterations = 0;
};

// Newton on s = log t, whose gradient is exactly the residual pair r(t).
// maximize: Hessian shifted to be negative definite, step halving keeps h
// from decreasing. root: plain Newton with step halving on |r|.
inline NewtonOutcome fiber_newton(const FiberModel& fm, FiberPoint t, double tol, int max_iter,
                                  NewtonMode mode) {
  NewtonOutcome out;
  auto rnorm = [](const NehariResidual& r) { return std::hypot(r.r1, r.r2); };
  for (int it = 0; it <= max_iter; ++it) {
    const double h = fm.value(t);
    const auto r = fm.residual(t);
    if (r.max_abs() <= tol * (std::fabs(h) + 1.0)) {
      out.t = t;
      out.converged = true;
      out.iterations = it;
      return out;
    }
    if (it == max_iter) break;
    auto H = fm.log_hessian(t);
    if (mode == NewtonMode::maximize) {
      const double top = sym2_max_eig(H);
      const double floor = 1e-3 * std::max(std::fabs(sym2_min_eig(H)), std::fabs(h) + 1.0);
      if (top > -floor) {
        H[0] -= top + floor;
        H[3] -= top + floor;
      }
    }
    const double det = H[0] * H[3] - H[1] * H[2];
    double d1, d2;
    if (det != 0.0 && std::isfinite(det)) {
      d1 = -(H[3] * r.r1 - H[1] * r.r2) / det;
      d2 = -(-H[2] * r.r1 + H[0] * r.r2) / det;
    } else {
      const double sc = 1.0 / (std::fabs(h) + 1.0);
      d1 = sc * r.r1;
      d2 = sc * r.r2;
    }
    const double len = std::hypot(d1, d2);
    if (len > 2.0) {
      d1 *= 2.0 / len;
      d2 *= 2.0 / len;
    }
    double alpha = 1.0;
    bool moved = false;
    const double slack = 1e-13 * (std::fabs(h) + 1.0);
    const double r0 = rnorm(r);
    for (int k = 0; k < 60; ++k, alpha *= 0.5) {
      const FiberPoint cand{t.t1 * std::exp(alpha * d1), t.t2 * std::exp(alpha * d2)};
      bool ok;
      if (mode == NewtonMode::maximize) {
        ok = fm.value(cand) >= h - slack;
      } else {
        ok = rnorm(fm.residual(cand)) < r0;
      }
      if (ok) {
        t = cand;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  out.t = t;
  out.iterations = max_iter;
  return out;
}

}  // namespace detail

/// Projects u onto the Nehari set along its fiber.
inline ProjectionResult project_to_nehari(const StatePair& u, const ProblemParams& pp,
                                          const CoefficientFamily& f1,
                                          const CoefficientFamily& f2, const Grid& g,
                                          const ProjectionOptions& opts = {}) {
  require_same_grid(g, u);
  if (!any_nonzero(u.u1) || !any_nonzero(u.u2))
    throw DegenerateInput("projection needs both components nontrivial");
  ProjectionResult res;
  res.weak_competition = pp.beta >= -1.0 && pp.beta < 0.0;
  const FiberModel fm(u, pp, f1, f2, g);
  if (!fm.projectable()) return res;

  FiberPoint start;
  if (opts.warm_start && pp.beta < 0.0) {
    start = *opts.warm_start;
  } else {
    auto best = detail::scan_box(fm, opts.t_min, opts.t_max, opts.scan_points);
    if (best.on_boundary)
      best = detail::scan_box(fm, opts.t_min / 10.0, opts.t_max * 10.0, opts.scan_points);
    if (best.on_boundary) return res;
    start = best.t;
  }
  auto nt = detail::fiber_newton(fm, start, opts.tol, opts.max_newton,
                                 detail::NewtonMode::maximize);
  if (!nt.converged && opts.warm_start && pp.beta < 0.0) {
    // the warm start was poor; fall back to the scan
    ProjectionOptions cold = opts;
    cold.warm_start.reset();
    return project_to_nehari(u, pp, f1, f2, g, cold);
  }
  if (!nt.converged) throw NoConvergence("fiber maximization", opts.max_newton);
  res.t = nt.t;
  res.newton_iterations = nt.iterations;
  res.projected = scaled(u, nt.t);
  res.residual = nehari_residual(res.projected, pp, f1, f2, g);
  res.value = fm.value(nt.t);
  res.status = ProjectionStatus::interior_max;
  return res;
}

/// Drives both Nehari residuals to zero by a 2-D rescale, starting from
/// t = (1, 1) and following the nearest fiber critical point. Used in the
/// cooperative regime, where the fiber maximum may escape to the boundary.
inline std::optional<FiberPoint> nehari_rescale(const StatePair& u, const ProblemParams& pp,
                                                const CoefficientFamily& f1,
                                                const CoefficientFamily& f2, const Grid& g,
                                                double tol = 1e-10, int max_iter = 100) {
  if (!any_nonzero(u.u1) || !any_nonzero(u.u2)) return std::nullopt;
  const FiberModel fm(u, pp, f1, f2, g);
  auto nt = detail::fiber_newton(fm, FiberPoint{}, tol, max_iter, detail::NewtonMode::root);
  if (!nt.converged) return std::nullopt;
  return nt.t;
}

/// Each component divided by its gradient norm.
inline StatePair sphere_normalize(const StatePair& u, const Grid& g) {
  require_same_grid(g, u);
  const double n1 = std::sqrt(h1_norm_sq(u.u1.values, g));
  const double n2 = std::sqrt(h1_norm_sq(u.u2.values, g));
  if (!(n1 > 0.0) || !(n2 > 0.0)) throw DegenerateInput("cannot normalize a zero component");
  return StatePair((1.0 / n1) * u.u1, (1.0 / n2) * u.u2);
}

inline ScalarField sphere_normalize(const ScalarField& z, const Grid& g) {
  require_same_grid(g, z);
  const double n = std::sqrt(h1_norm_sq(z.values, g));
  if (!(n > 0.0)) throw DegenerateInput("cannot normalize a zero field");
  return (1.0 / n) * z;
}

/// Cells of an n x n log grid over [lo, hi]^2 around which the residual
/// field t -> (t1 dh/dt1, t2 dh/dt2) has nonzero winding number.
struct CriticalScan {
  std::vector<std::pair<int, int>> cells;
  std::vector<int> winding;
};

inline CriticalScan scan_critical_cells(const FiberModel& fm, double lo, double hi, int n) {
  const auto tau = detail::log_axis(lo, hi, n);
  const double hp = 0.5 * fm.params().p;
  const double beta = fm.params().beta;
  std::array<std::vector<double>, 2> d;
  for (int i = 0; i < 2; ++i) {
    d[i].resize(n);
    for (int k = 0; k < n; ++k)
      d[i][k] = tau[k] * fm.component_derivative(i, tau[k], fm.Q(i, tau[k]), fm.dQ(i, tau[k]));
  }
  const double c = fm.cross();
  std::vector<double> ang(static_cast<std::size_t>(n) * n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      const double coup = beta * pow_abs(tau[i], hp) * pow_abs(tau[j], hp) * c;
      ang[j * n + i] = std::atan2(d[1][j] - coup, d[0][i] - coup);
    }
  auto wrap = [](double a) {
    constexpr double pi = 3.14159265358979323846;
    while (a > pi) a -= 2.0 * pi;
    while (a < -pi) a += 2.0 * pi;
    return a;
  };
  CriticalScan out;
  for (int j = 0; j + 1 < n; ++j)
    for (int i = 0; i + 1 < n; ++i) {
      const double a0 = ang[j * n + i], a1 = ang[j * n + i + 1];
      const double a2 = ang[(j + 1) * n + i + 1], a3 = ang[(j + 1) * n + i];
      const double total = wrap(a1 - a0) + wrap(a2 - a1) + wrap(a3 - a2) + wrap(a0 - a3);
      const int w = static_cast<int>(std::lround(total / (2.0 * 3.14159265358979323846)));
      if (w != 0) {
        out.cells.emplace_back(i, j);
        out.winding.push_back(w);
      }
    }
  return out;
}

// Scalar fiber: h(t) = I_kappa(t z) with the power term weighted by kappa.

class ScalarFiberModel {
 public:
  ScalarFiberModel(const ScalarField& z, double lambda, double kappa, double p,
                   const CoefficientFamily& fam, const Grid& g)
      : c_(z, fam, lambda, p, g), kappa_(kappa), p_(p) {
    require_same_grid(g, z);
  }

  double value(double t) const {
    return 0.5 * t * t * (c_.Q(t) - c_.lambda * c_.mass) - kappa_ * pow_abs(t, p_) * c_.lp / p_;
  }
  double derivative(double t) const {
    return t * (c_.Q(t) - c_.lambda * c_.mass) + 0.5 * t * t * c_.dQ(t) -
           kappa_ * pow_abs(t, p_ - 1.0) * c_.lp;
  }
  double lp() const noexcept { return c_.lp; }

 private:
  detail::FiberComponent c_;
  double kappa_, p_;
};

struct ScalarProjection {
  double t = 1.0;
  double value = 0.0;
  double residual = 0.0;  ///< t h'(t)
  int iterations = 0;
};

/// Maximizer of the scalar fiber over t > 0: log scan, then Newton in log t.
inline ScalarProjection project_scalar(const ScalarFiberModel& fm, double tol = 1e-10,
                                       double lo = 1e-3, double hi = 1e3, int scan_points = 256,
                                       std::optional<double> warm = std::nullopt) {
  if (!(fm.lp() > 0.0)) throw DegenerateInput("scalar projection of a zero field");
  double t = 1.0;
  if (warm) {
    t = *warm;
  } else {
    auto scan = [&](double a, double b, double& best_t) {
      const auto tau = detail::log_axis(a, b, scan_points);
      double best = -std::numeric_limits<double>::infinity();
      int bk = 0;
      for (int k = 0; k < scan_points; ++k) {
        const double h = fm.value(tau[k]);
        if (h > best) {
          best = h;
          bk = k;
        }
      }
      best_t = tau[bk];
      return bk > 0 && bk + 1 < scan_points;
    };
    if (!scan(lo, hi, t) && !scan(lo / 10.0, hi * 10.0, t))
      throw NotProjectable("scalar fiber has no interior maximum in the scan box");
  }
  const int max_iter = 100;
  for (int it = 0; it <= max_iter; ++it) {
    const double h = fm.value(t);
    const double r = t * fm.derivative(t);
    if (std::fabs(r) <= tol * (std::fabs(h) + 1.0)) return {t, h, r, it};
    if (it == max_iter) break;
    const double eps = 1e-5;
    const double ta = t * std::exp(eps), tb = t * std::exp(-eps);
    double h2 = (ta * fm.derivative(ta) - tb * fm.derivative(tb)) / (2.0 * eps);
    if (!(h2 < 0.0)) h2 = -std::max(std::fabs(h2), std::fabs(h) + 1.0);
    double ds = std::clamp(-r / h2, -2.0, 2.0);
    bool moved = false;
    for (int k = 0; k < 60; ++k, ds *= 0.5) {
      const double cand = t * std::exp(ds);
      if (fm.value(cand) >= h - 1e-13 * (std::fabs(h) + 1.0)) {
        t = cand;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  if (warm) return project_scalar(fm, tol, lo, hi, scan_points, std::nullopt);
  throw NoConvergence("scalar fiber maximization", max_iter);
}

}  // namespace qlsys
