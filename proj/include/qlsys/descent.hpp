#pragma once

// Energy descent constrained to the Nehari set, and a Newton-Krylov polish.
// Both work on a flat state vector holding one or two components.

#include <cmath>
#include <deque>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "qlsys/energy.hpp"
#include "qlsys/fiber.hpp"
#include "qlsys/krylov.hpp"
#include "qlsys/poisson.hpp"

namespace qlsys::detail {

class NehariProblem {
 public:
  explicit NehariProblem(const Grid& g) : g_(g) {}
  virtual ~NehariProblem() = default;
  virtual int components() const = 0;
  virtual double energy(std::span<const double> x) const = 0;
  /// Nodal derivative, not volume-scaled.
  virtual void gradient(std::span<const double> x, std::span<double> d) const = 0;
  /// Moves x onto the Nehari set along its fiber; false when that fails.
  virtual bool rescale(std::vector<double>& x) const = 0;
  virtual NehariResidual nehari(std::span<const double> x) const = 0;
  const Grid& grid() const noexcept { return g_; }

  /// Function-space L2 norm of the volume-scaled gradient.
  double residual(std::span<const double> d) const {
    return std::sqrt(dot(d, d) / g_.cell_volume());
  }

 protected:
  const Grid& g_;
};

struct FiberBox {
  double tol = 1e-10;
  double t_min = 1e-3;
  double t_max = 1e3;
  int scan_points = 64;
};

class ScalarProblem final : public NehariProblem {
 public:
  ScalarProblem(const Grid& g, double lambda, double kappa, double p,
                const CoefficientFamily& fam, FiberBox box)
      : NehariProblem(g), lambda_(lambda), kappa_(kappa), p_(p), fam_(fam), box_(box) {}

  int components() const override { return 1; }
  double energy(std::span<const double> x) const override {
    return single_energy(g_, x, lambda_, kappa_, p_, fam_);
  }
  void gradient(std::span<const double> x, std::span<double> d) const override {
    single_gradient(g_, x, lambda_, kappa_, p_, fam_, d);
  }
  bool rescale(std::vector<double>& x) const override {
    ScalarField z(g_, x);
    if (!any_nonzero(z)) return false;
    try {
      const ScalarFiberModel fm(z, lambda_, kappa_, p_, fam_, g_);
      const auto pr = project_scalar(fm, box_.tol, box_.t_min, box_.t_max, 256, 1.0);
      for (double& v : x) v *= pr.t;
      return true;
    } catch (const NotProjectable&) {
      return false;
    } catch (const NoConvergence&) {
      return false;
    }
  }
  NehariResidual nehari(std::span<const double> x) const override {
    ScalarField z(g_, std::vector<double>(x.begin(), x.end()));
    if (!any_nonzero(z)) return {};
    const ScalarFiberModel fm(z, lambda_, kappa_, p_, fam_, g_);
    return {fm.derivative(1.0), 0.0};
  }

 private:
  double lambda_, kappa_, p_;
  const CoefficientFamily& fam_;
  FiberBox box_;
};

class PairProblem final : public NehariProblem {
 public:
  PairProblem(const Grid& g, const ProblemParams& pp, const CoefficientFamily& f1,
              const CoefficientFamily& f2, FiberBox box)
      : NehariProblem(g), pp_(pp), f1_(f1), f2_(f2), box_(box), n_(g.node_count()) {}

  int components() const override { return 2; }
  double energy(std::span<const double> x) const override {
    return pair_energy(g_, x.first(n_), x.subspan(n_), pp_, f1_, f2_);
  }
  void gradient(std::span<const double> x, std::span<double> d) const override {
    pair_gradient(g_, x.first(n_), x.subspan(n_), pp_, f1_, f2_, d.first(n_), d.subspan(n_));
  }
  bool rescale(std::vector<double>& x) const override {
    const StatePair u = unpack(x);
    if (!any_nonzero(u.u1) || !any_nonzero(u.u2)) return false;
    FiberPoint t;
    if (pp_.beta < 0.0) {
      // competitive: the fiber maximum, warm-started at the current scaling
      ProjectionOptions po;
      po.tol = box_.tol;
      po.t_min = box_.t_min;
      po.t_max = box_.t_max;
      po.scan_points = box_.scan_points;
      po.warm_start = FiberPoint{};
      try {
        const auto pr = project_to_nehari(u, pp_, f1_, f2_, g_, po);
        if (pr.status != ProjectionStatus::interior_max) return false;
        t = pr.t;
      } catch (const NoConvergence&) {
        return false;
      }
    } else {
      auto r = nehari_rescale(u, pp_, f1_, f2_, g_, box_.tol);
      if (!r) return false;
      t = *r;
    }
    for (std::size_t k = 0; k < n_; ++k) {
      x[k] *= t.t1;
      x[n_ + k] *= t.t2;
    }
    return true;
  }
  NehariResidual nehari(std::span<const double> x) const override {
    return pair_nehari(g_, x.first(n_), x.subspan(n_), pp_, f1_, f2_);
  }

  StatePair unpack(std::span<const double> x) const {
    return StatePair(ScalarField(g_, std::vector<double>(x.begin(), x.begin() + n_)),
                     ScalarField(g_, std::vector<double>(x.begin() + n_, x.end())));
  }

 private:
  ProblemParams pp_;
  const CoefficientFamily& f1_;
  const CoefficientFamily& f2_;
  FiberBox box_;
  std::size_t n_;
};

inline std::vector<double> pack(const StatePair& u) {
  std::vector<double> x(u.u1.values);
  x.insert(x.end(), u.u2.values.begin(), u.u2.values.end());
  return x;
}

/// Blockwise K^{-1}.
inline void riesz(const StiffnessInverse& kinv, int m, std::span<const double> d,
                  std::span<double> w) {
  const std::size_t n = d.size() / m;
  for (int c = 0; c < m; ++c) kinv.solve(d.subspan(c * n, n), w.subspan(c * n, n));
}

struct DescentOptions {
  double stop_residual = 1e-8;
  int max_iter = 2000;
  double armijo = 1e-4;
  double stagnation = 1e-12;
  int stagnation_window = 20;
};

struct DescentResult {
  std::vector<double> x;
  double energy = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool stalled = false;
};

/// Riesz-preconditioned descent of the energy restricted to the Nehari set.
/// The search direction is K^{-1} J'(u) with its component along each u_i
/// removed (the tangent space of the unit sphere), steps are retracted by the
/// problem's rescale. x must already lie on the Nehari set.
inline DescentResult nehari_descent(
    const NehariProblem& pb, std::vector<double> x, const StiffnessInverse& kinv,
    const DescentOptions& o,
    const std::function<void(std::span<const double>, double)>& on_iterate = {}) {
  const Grid& g = pb.grid();
  const int m = pb.components();
  const std::size_t n = g.node_count();
  std::vector<double> d(x.size()), w(x.size()), dn(x.size()), trial(x.size()), kx(n);

  double E = pb.energy(x);
  pb.gradient(x, d);
  double res = pb.residual(d);
  double alpha = 1.0;
  std::deque<double> history{E};
  DescentResult out;

  for (int it = 0; it < o.max_iter && res > o.stop_residual; ++it) {
    riesz(kinv, m, d, w);
    for (int c = 0; c < m; ++c) {
      auto xc = std::span<const double>(x).subspan(c * n, n);
      apply_stiffness(g, xc, kx);
      const double xkx = dot(xc, kx);
      if (!(xkx > 0.0)) continue;
      const double coef = dot(std::span<const double>(d).subspan(c * n, n), xc) / xkx;
      for (std::size_t k = 0; k < n; ++k) w[c * n + k] -= coef * xc[k];
    }
    const double slope = dot(d, w);
    if (!(slope > 0.0)) {
      out.stalled = true;
      break;
    }
    bool accepted = false;
    double Et = E;
    for (int k = 0; k < 60; ++k, alpha *= 0.5) {
      trial = x;
      for (std::size_t q = 0; q < x.size(); ++q) trial[q] -= alpha * w[q];
      if (!pb.rescale(trial)) continue;
      Et = pb.energy(trial);
      if (Et <= E - o.armijo * alpha * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      out.stalled = true;
      break;
    }
    pb.gradient(trial, dn);
    // Barzilai-Borwein step in the K metric for the next iteration
    double sks = 0.0, sy = 0.0;
    std::vector<double> s(x.size());
    for (std::size_t q = 0; q < x.size(); ++q) s[q] = trial[q] - x[q];
    for (int c = 0; c < m; ++c) {
      auto sc = std::span<const double>(s).subspan(c * n, n);
      apply_stiffness(g, sc, kx);
      sks += dot(sc, kx);
    }
    for (std::size_t q = 0; q < x.size(); ++q) sy += s[q] * (dn[q] - d[q]);
    const double bb = sy > 0.0 ? sks / sy : 2.0 * alpha;
    alpha = std::clamp(bb, 1e-8, 1e8);

    x.swap(trial);
    d.swap(dn);
    E = Et;
    res = pb.residual(d);
    out.iterations = it + 1;
    if (on_iterate) on_iterate(x, E);

    history.push_back(E);
    if (static_cast<int>(history.size()) > o.stagnation_window) {
      const double old = history.front();
      history.pop_front();
      if (old - E <= o.stagnation * (std::fabs(E) + 1.0)) {
        out.stalled = true;
        break;
      }
    }
  }
  out.energy = E;
  out.residual = res;
  out.x = std::move(x);
  return out;
}

struct RefineOptions {
  double tol = 1e-8;
  int max_newton = 40;
  double gmres_tol = 1e-8;
  int gmres_restart = 60;
  int gmres_max = 600;
  bool rescale = true;
  bool energy_guard = true;
};

struct RefineResult {
  std::vector<double> x;
  double energy = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Damped Newton on J'(u) = 0 with GMRES, right-preconditioned by K^{-1},
/// and Hessian-vector products by central differences of the gradient.
/// Steps are accepted when the dual residual norm decreases and, with the
/// guard on, the energy does not increase beyond round-off.
inline RefineResult newton_refine(const NehariProblem& pb, std::vector<double> x,
                                  const StiffnessInverse& kinv, const RefineOptions& o) {
  const int m = pb.components();
  const std::size_t N = x.size();
  std::vector<double> d(N), dt(N), kd(N), tmp(N), xp(N), gp(N), gm(N);
  auto dual = [&](const std::vector<double>& grad) {
    riesz(kinv, m, grad, kd);
    return dot(grad, kd);
  };
  auto maxabs = [](std::span<const double> v) {
    double a = 0.0;
    for (double e : v) a = std::max(a, std::fabs(e));
    return a;
  };

  RefineResult out;
  double E = pb.energy(x);
  pb.gradient(x, d);
  double res = pb.residual(d);
  double phi = dual(d);

  int it = 0;
  for (; it < o.max_newton && res > o.tol; ++it) {
    const double xs = 1.0 + maxabs(x);
    auto hess = [&](std::span<const double> v, std::span<double> hv) {
      const double vm = maxabs(v);
      if (vm == 0.0) {
        std::fill(hv.begin(), hv.end(), 0.0);
        return;
      }
      const double eps = 1e-7 * xs / vm;
      for (std::size_t q = 0; q < N; ++q) xp[q] = x[q] + eps * v[q];
      pb.gradient(xp, gp);
      for (std::size_t q = 0; q < N; ++q) xp[q] = x[q] - eps * v[q];
      pb.gradient(xp, gm);
      for (std::size_t q = 0; q < N; ++q) hv[q] = (gp[q] - gm[q]) / (2.0 * eps);
    };
    auto precond = [&](std::span<const double> v, std::span<double> pv) { riesz(kinv, m, v, pv); };
    std::vector<double> rhs(N), delta(N, 0.0);
    for (std::size_t q = 0; q < N; ++q) rhs[q] = -d[q];
    gmres(hess, precond, rhs, delta, o.gmres_tol, o.gmres_restart, o.gmres_max);

    bool accepted = false;
    std::vector<double> trial(N);
    double alpha = 1.0;
    for (int k = 0; k < 30; ++k, alpha *= 0.5) {
      for (std::size_t q = 0; q < N; ++q) trial[q] = x[q] + alpha * delta[q];
      if (o.rescale && !pb.rescale(trial)) continue;
      const double Et = pb.energy(trial);
      if (o.energy_guard && Et > E + 1e-12 * (std::fabs(E) + 1.0)) continue;
      pb.gradient(trial, dt);
      const double pt = dual(dt);
      if (pt < (1.0 - 1e-4 * alpha) * phi) {
        x.swap(trial);
        d.swap(dt);
        E = Et;
        phi = pt;
        res = pb.residual(d);
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
  }
  out.iterations = it;
  out.converged = res <= o.tol;
  out.energy = E;
  out.residual = res;
  out.x = std::move(x);
  return out;
}

}  // namespace qlsys::detail
