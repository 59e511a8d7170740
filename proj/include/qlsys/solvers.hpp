#pragma once

// Scalar ground states, the competitive least energy solution, cooperative
// candidates and beta sweeps.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "qlsys/descent.hpp"
#include "qlsys/spectrum.hpp"

namespace qlsys {

struct SolverOptions {
  double tol = 1e-8;          ///< Euler residual, function-space L2 norm
  double nehari_tol = 1e-10;  ///< relative to |h| + 1
  int restarts = 4;
  std::uint64_t seed = 0;
  int max_iter = 3000;
  double scan_min = 1e-3;
  double scan_max = 1e3;
  int scan_points = 64;
  double stagnation = 1e-12;
  int stagnation_window = 20;
  /// Descent hands over to the Newton polish below this residual.
  double polish_from = 1e-4;
  /// Set when solving swapped data so that per-component seeds follow the swap.
  bool swap_seeds = false;

  friend bool operator==(const SolverOptions&, const SolverOptions&) = default;
};

enum class Regime { cooperative, competitive, decoupled };

inline const char* to_string(Regime r) {
  switch (r) {
    case Regime::cooperative: return "cooperative";
    case Regime::competitive: return "competitive";
    case Regime::decoupled: return "decoupled";
  }
  return "?";
}

struct SolveReport {
  double energy = 0.0;
  double L1 = 0.0;
  double L2 = 0.0;
  double e_beta_estimate = 0.0;
  double euler_residual_norm = 0.0;
  NehariResidual nehari_residual;
  bool fully_nontrivial = false;
  bool nonnegative = false;
  int iterations = 0;
  Regime regime = Regime::decoupled;
  std::vector<std::string> warnings;
  bool below_semitrivial = false;  ///< e_beta < min(L1, L2)
  bool floors_hold = true;
  bool coercivity_holds = true;
  /// int |w|^p of the diagonal candidate (cooperative, symmetric data only).
  double diag_lp = std::numeric_limits<double>::quiet_NaN();
  double lp1 = 0.0;
  double lp2 = 0.0;
};

struct ScalarSolution {
  ScalarField z;
  double L = 0.0;
  double residual = 0.0;
  double nehari = 0.0;
  int iterations = 0;
  bool nonnegative = false;
  double lower_bound = 0.0;  ///< coercivity lower bound for L
  std::vector<std::string> warnings;
};

struct SystemSolution {
  StatePair u;
  SolveReport report;
};

namespace detail {

inline std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Random stream for component i; follows the component under a data swap.
inline std::mt19937_64 component_rng(const SolverOptions& o, int i, std::uint64_t tag) {
  const int c = o.swap_seeds ? 1 - i : i;
  return std::mt19937_64(splitmix(splitmix(o.seed) ^ splitmix(tag * 4 + c)));
}

struct Context {
  const Grid& g;
  StiffnessInverse kinv;
  double mu1;
  explicit Context(const Grid& grid)
      : g(grid), kinv(grid), mu1(conservative_mu1(grid, principal_eigenpair(grid))) {}
};

inline FiberBox fiber_box(const SolverOptions& o) {
  return {o.nehari_tol, o.scan_min, o.scan_max, o.scan_points};
}

inline DescentOptions descent_options(const SolverOptions& o) {
  DescentOptions d;
  d.stop_residual = std::max(o.tol, o.polish_from);
  d.max_iter = o.max_iter;
  d.stagnation = o.stagnation;
  d.stagnation_window = o.stagnation_window;
  return d;
}

inline RefineOptions refine_options(const SolverOptions& o) {
  RefineOptions r;
  r.tol = o.tol;
  return r;
}

inline std::vector<double> bubble(const Grid& g) {
  std::vector<double> z(g.node_count());
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i)
      z[g.index(i, j)] = std::sin(std::numbers::pi * g.x(i) / g.lx()) *
                         std::sin(std::numbers::pi * g.y(j) / g.ly());
  return z;
}

inline std::vector<double> gaussian_bump(const Grid& g, double cx, double cy, double width) {
  std::vector<double> z(g.node_count());
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      const double dx = g.x(i) - cx, dy = g.y(j) - cy;
      z[g.index(i, j)] = std::exp(-(dx * dx + dy * dy) / (2.0 * width * width));
    }
  return z;
}

/// Bump for component i: left quarter for 0, right quarter for 1.
inline std::vector<double> segregated_bump(const Grid& g, int i, const SolverOptions& o) {
  const int c = o.swap_seeds ? 1 - i : i;
  return gaussian_bump(g, (c == 0 ? 0.25 : 0.75) * g.lx(), 0.5 * g.ly(), g.lx() / 8.0);
}

/// Smooth positive random data: the bubble times exp of a few random modes.
inline std::vector<double> random_positive(const Grid& g, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  double c[3][3];
  for (auto& row : c)
    for (double& v : row) v = nd(rng);
  auto z = bubble(g);
  for (int j = 0; j < g.ny(); ++j)
    for (int i = 0; i < g.nx(); ++i) {
      double e = 0.0;
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
          e += c[a][b] / (a + b + 1) * std::cos(std::numbers::pi * (a + 1) * g.x(i) / g.lx()) *
               std::cos(std::numbers::pi * (b + 1) * g.y(j) / g.ly());
      z[g.index(i, j)] *= std::exp(0.7 * e);
    }
  return z;
}

inline void sign_normalize(std::vector<double>& z, const CoefficientFamily& fam) {
  if (!fam.is_even()) return;
  double s = 0.0;
  for (double v : z) s += v;
  if (s < 0.0)
    for (double& v : z) v = -v;
}

inline bool single_signed(std::span<const double> z) {
  double lo = 0.0, hi = 0.0;
  for (double v : z) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  return lo >= -1e-8 * hi;
}

inline double lower_bound_coefficient(double p, double gamma, double nu, double lambda,
                                      double mu1) {
  return (p - 2.0 - gamma) / (2.0 * p) * nu - (p - 2.0) * lambda / (2.0 * p * mu1);
}

/// Coercivity bound on the Nehari set; the lambda term uses int u^2 directly
/// when lambda < 0, where the Poincare form would point the wrong way.
inline double coercivity_bound(const ComponentMoments& m, double p, double gamma, double nu,
                               double lambda, double mu1) {
  if (lambda >= 0.0) return lower_bound_coefficient(p, gamma, nu, lambda, mu1) * m.grad_sq;
  return (p - 2.0 - gamma) / (2.0 * p) * nu * m.grad_sq - (p - 2.0) / (2.0 * p) * lambda * m.mass;
}

inline void check_admissible(double lambda, double p, const CoefficientFamily& fam, double mu1,
                             int i, std::vector<std::string>& warnings) {
  const double weak = fam.nu() * mu1;
  const double strong = admissibility_threshold(p, fam.gamma(), fam.nu(), mu1);
  const std::string name = "lambda" + std::to_string(i + 1);
  if (!(lambda < weak))
    throw InadmissibleLambda(name + " = " + format17(lambda) + " is not below nu mu1 = " +
                                 format17(weak),
                             weak);
  if (!(lambda < strong))
    warnings.push_back(name + " above the strong threshold " + format17(strong));
}

struct ScalarRun {
  std::vector<double> z;
  double energy = 0.0;
  double residual = 0.0;
  int iterations = 0;
  std::vector<std::string> warnings;
};

/// Multi-start reduced descent plus Newton polish for -div(a grad z) ... =
/// lambda z + kappa |z|^(p-2) z.
inline ScalarRun scalar_run(const Context& ctx, double lambda, double kappa, double p,
                            const CoefficientFamily& fam, const SolverOptions& o,
                            std::mt19937_64 rng) {
  const ScalarProblem pb(ctx.g, lambda, kappa, p, fam, fiber_box(o));
  std::optional<ScalarRun> best;
  ScalarRun last_failure;
  int total = 0;
  for (int k = 0; k < std::max(1, o.restarts); ++k) {
    auto z = k == 0 ? bubble(ctx.g) : random_positive(ctx.g, rng);
    if (!pb.rescale(z)) {
      last_failure.warnings.push_back("start " + std::to_string(k) + " not projectable");
      continue;
    }
    auto dr = nehari_descent(pb, std::move(z), ctx.kinv, descent_options(o));
    auto rr = newton_refine(pb, std::move(dr.x), ctx.kinv, refine_options(o));
    total += dr.iterations + rr.iterations;
    if (!rr.converged) {
      last_failure.residual = rr.residual;
      continue;
    }
    if (!best || rr.energy < best->energy) {
      best = ScalarRun{std::move(rr.x), rr.energy, rr.residual, 0, {}};
    }
  }
  if (!best) throw NoConvergence("scalar ground state", total);
  best->iterations = total;
  sign_normalize(best->z, fam);
  return *best;
}

inline ScalarSolution scalar_solution(const Context& ctx, int i, const ProblemParams& pp,
                                      const CoefficientFamily& fam, const SolverOptions& o) {
  ScalarSolution out;
  check_admissible(pp.lambda(i), pp.p, fam, ctx.mu1, i, out.warnings);
  auto run = scalar_run(ctx, pp.lambda(i), 1.0, pp.p, fam, o, component_rng(o, i, 1));
  out.z = ScalarField(ctx.g, std::move(run.z));
  out.L = scalar_energy(out.z, i, pp, fam, ctx.g);
  out.residual = run.residual;
  out.iterations = run.iterations;
  out.nonnegative = single_signed(out.z.values);
  const ScalarFiberModel fm(out.z, pp.lambda(i), 1.0, pp.p, fam, ctx.g);
  out.nehari = fm.derivative(1.0);
  out.lower_bound = lower_bound_coefficient(pp.p, fam.gamma(), fam.nu(), pp.lambda(i), ctx.mu1) *
                    h1_norm_sq(out.z.values, ctx.g);
  for (auto& w : run.warnings) out.warnings.push_back(std::move(w));
  return out;
}

struct Levels {
  ScalarSolution s1, s2;
};

inline Levels levels(const Context& ctx, const ProblemParams& pp, const CoefficientFamily& f1,
                     const CoefficientFamily& f2, const SolverOptions& o) {
  return {scalar_solution(ctx, 0, pp, f1, o), scalar_solution(ctx, 1, pp, f2, o)};
}

/// Fills everything but the regime-specific fields.
inline SolveReport make_report(const Context& ctx, StatePair& u, const ProblemParams& pp,
                               const CoefficientFamily& f1, const CoefficientFamily& f2,
                               const SolverOptions& o, const Levels& lv) {
  sign_normalize(u.u1.values, f1);
  sign_normalize(u.u2.values, f2);
  SolveReport r;
  r.L1 = lv.s1.L;
  r.L2 = lv.s2.L;
  r.energy = total_energy(u, pp, f1, f2, ctx.g);
  r.euler_residual_norm = residual_norm(euler_gradient(u, pp, f1, f2, ctx.g), ctx.g);
  r.nehari_residual = nehari_residual(u, pp, f1, f2, ctx.g);
  const auto m1 = moments(u.u1, pp.p, ctx.g);
  const auto m2 = moments(u.u2, pp.p, ctx.g);
  r.lp1 = m1.lp;
  r.lp2 = m2.lp;
  r.fully_nontrivial = m1.lp > 1e3 * o.tol && m2.lp > 1e3 * o.tol;
  r.nonnegative = single_signed(u.u1.values) && single_signed(u.u2.values);
  if (pp.beta <= 0.0) {
    auto floor_ok = [&](const ComponentMoments& m, const CoefficientFamily& f, double lambda,
                        double ri) {
      const double lhs = f.nu() * (1.0 - lambda / (f.nu() * ctx.mu1)) * m.grad_sq;
      return lhs <= m.lp + std::fabs(ri) + 1e-12 * m.lp;
    };
    r.floors_hold = floor_ok(m1, f1, pp.lambda1, r.nehari_residual.r1) &&
                    floor_ok(m2, f2, pp.lambda2, r.nehari_residual.r2);
  }
  const double bound = coercivity_bound(m1, pp.p, f1.gamma(), f1.nu(), pp.lambda1, ctx.mu1) +
                       coercivity_bound(m2, pp.p, f2.gamma(), f2.nu(), pp.lambda2, ctx.mu1);
  const double slack = (std::fabs(r.nehari_residual.r1) + std::fabs(r.nehari_residual.r2)) / pp.p +
                       1e-12 * (std::fabs(r.energy) + 1.0);
  r.coercivity_holds = r.energy >= bound - slack;
  return r;
}

/// Throws InvariantViolation when an iterate on the Nehari set breaks the
/// coercivity bound.
inline auto coercivity_guard(const Context& ctx, const ProblemParams& pp,
                             const CoefficientFamily& f1, const CoefficientFamily& f2) {
  return [&ctx, pp, &f1, &f2](std::span<const double> x, double E) {
    const std::size_t n = ctx.g.node_count();
    const ScalarField a(ctx.g, std::vector<double>(x.begin(), x.begin() + n));
    const ScalarField b(ctx.g, std::vector<double>(x.begin() + n, x.end()));
    const auto m1 = moments(a, pp.p, ctx.g);
    const auto m2 = moments(b, pp.p, ctx.g);
    const auto r = pair_nehari(ctx.g, a.values, b.values, pp, f1, f2);
    const double bound = coercivity_bound(m1, pp.p, f1.gamma(), f1.nu(), pp.lambda1, ctx.mu1) +
                         coercivity_bound(m2, pp.p, f2.gamma(), f2.nu(), pp.lambda2, ctx.mu1);
    const double slack =
        (std::fabs(r.r1) + std::fabs(r.r2)) / pp.p + 1e-12 * (std::fabs(E) + 1.0);
    if (E < bound - slack)
      throw InvariantViolation("coercivity bound violated on the Nehari set: energy " +
                               format17(E) + " < bound " + format17(bound));
  };
}

struct Candidate {
  std::vector<double> x;
  double energy = 0.0;
  double residual = 0.0;
  int iterations = 0;
};

/// Descent on the Nehari set then Newton polish; nullopt when the start
/// cannot be placed on the Nehari set.
inline std::optional<Candidate> run_candidate(const Context& ctx, const PairProblem& pb,
                                              std::vector<double> x, const SolverOptions& o,
                                              const std::function<void(std::span<const double>, double)>& guard) {
  if (!pb.rescale(x)) return std::nullopt;
  auto dr = nehari_descent(pb, std::move(x), ctx.kinv, descent_options(o), guard);
  auto rr = newton_refine(pb, std::move(dr.x), ctx.kinv, refine_options(o));
  return Candidate{std::move(rr.x), rr.energy, rr.residual, dr.iterations + rr.iterations};
}

inline bool nontrivial(const Context& ctx, const std::vector<double>& x, double p, double tol) {
  const std::size_t n = ctx.g.node_count();
  double a = 0.0, b = 0.0;
  const ScalarField u1(ctx.g, std::vector<double>(x.begin(), x.begin() + n));
  const ScalarField u2(ctx.g, std::vector<double>(x.begin() + n, x.end()));
  a = moments(u1, p, ctx.g).lp;
  b = moments(u2, p, ctx.g).lp;
  return a > 1e3 * tol && b > 1e3 * tol;
}

inline std::vector<double> concat(std::vector<double> a, const std::vector<double>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

inline SystemSolution finish(const Context& ctx, const PairProblem& pb, const Candidate& c,
                             const ProblemParams& pp, const CoefficientFamily& f1,
                             const CoefficientFamily& f2, const SolverOptions& o,
                             const Levels& lv, Regime regime, std::vector<std::string> warnings,
                             int iterations) {
  SystemSolution s;
  // final rescale well inside the Nehari tolerance; a tiny move along the fiber
  std::vector<double> x = c.x;
  FiberBox tight = fiber_box(o);
  tight.tol = std::min(tight.tol, 1e-13);
  const PairProblem fine(ctx.g, pp, f1, f2, tight);
  if (!nontrivial(ctx, x, pp.p, 0.0) || !fine.rescale(x)) x = c.x;
  s.u = pb.unpack(x);
  s.report = make_report(ctx, s.u, pp, f1, f2, o, lv);
  s.report.regime = regime;
  s.report.iterations = iterations;
  s.report.e_beta_estimate = s.report.energy;
  s.report.below_semitrivial = s.report.energy < std::min(lv.s1.L, lv.s2.L);
  s.report.warnings = std::move(warnings);
  return s;
}

inline SystemSolution competitive(const Context& ctx, const ProblemParams& pp,
                                  const CoefficientFamily& f1, const CoefficientFamily& f2,
                                  const SolverOptions& o, const Levels& lv,
                                  const StatePair* warm) {
  std::vector<std::string> warnings;
  check_admissible(pp.lambda1, pp.p, f1, ctx.mu1, 0, warnings);
  check_admissible(pp.lambda2, pp.p, f2, ctx.mu1, 1, warnings);
  if (pp.beta >= -1.0) warnings.push_back("weak competition: beta in [-1, 0)");
  const PairProblem pb(ctx.g, pp, f1, f2, fiber_box(o));
  const auto guard = coercivity_guard(ctx, pp, f1, f2);

  std::vector<std::vector<double>> starts;
  if (warm) starts.push_back(pack(*warm));
  const auto b1 = segregated_bump(ctx.g, 0, o), b2 = segregated_bump(ctx.g, 1, o);
  starts.push_back(concat(b1, b2));
  starts.push_back(concat(lv.s1.z.values, lv.s2.z.values));
  auto r1 = component_rng(o, 0, 2), r2 = component_rng(o, 1, 2);
  for (int k = 1; k < o.restarts; ++k) {
    auto p1 = random_positive(ctx.g, r1), p2 = random_positive(ctx.g, r2);
    if (k % 2 == 1)
      for (std::size_t q = 0; q < p1.size(); ++q) {
        p1[q] *= b1[q];
        p2[q] *= b2[q];
      }
    starts.push_back(concat(std::move(p1), std::move(p2)));
  }

  std::optional<Candidate> best;
  int total = 0, converged = 0;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    auto c = run_candidate(ctx, pb, starts[k], o, guard);
    if (!c) {
      warnings.push_back("start " + std::to_string(k) + " not projectable");
      continue;
    }
    total += c->iterations;
    if (c->residual > o.tol) continue;
    ++converged;
    if (!nontrivial(ctx, c->x, pp.p, o.tol)) continue;
    if (!best || c->energy < best->energy) best = std::move(c);
  }
  if (!best) {
    if (converged > 0) throw NoFullyNontrivialCandidate("every converged start is semi-trivial");
    throw NoConvergence("competitive least energy solution", total);
  }
  return finish(ctx, pb, *best, pp, f1, f2, o, lv, Regime::competitive, std::move(warnings),
                total);
}

inline SystemSolution cooperative(const Context& ctx, const ProblemParams& pp,
                                  const CoefficientFamily& f1, const CoefficientFamily& f2,
                                  const SolverOptions& o, const Levels& lv,
                                  const StatePair* warm) {
  std::vector<std::string> warnings;
  check_admissible(pp.lambda1, pp.p, f1, ctx.mu1, 0, warnings);
  check_admissible(pp.lambda2, pp.p, f2, ctx.mu1, 1, warnings);
  const PairProblem pb(ctx.g, pp, f1, f2, fiber_box(o));
  const auto guard = coercivity_guard(ctx, pp, f1, f2);

  double diag_lp = std::numeric_limits<double>::quiet_NaN();
  std::vector<std::vector<double>> starts;
  int total = 0;
  if (f1 == f2 && pp.lambda1 == pp.lambda2) {
    // (w, w) solves the system when w solves the scalar problem with weight 1 + beta
    auto w = scalar_run(ctx, pp.lambda1, 1.0 + pp.beta, pp.p, f1, o, component_rng(o, 0, 3));
    total += w.iterations;
    diag_lp = moments(ScalarField(ctx.g, w.z), pp.p, ctx.g).lp;
    starts.push_back(concat(w.z, w.z));
  }
  if (warm) starts.push_back(pack(*warm));
  {
    auto eps_z2 = lv.s2.z.values;
    auto eps_z1 = lv.s1.z.values;
    if (o.swap_seeds) {
      for (double& v : eps_z1) v *= 1e-2;
    } else {
      for (double& v : eps_z2) v *= 1e-2;
    }
    starts.push_back(concat(std::move(eps_z1), std::move(eps_z2)));
  }
  auto r1 = component_rng(o, 0, 4), r2 = component_rng(o, 1, 4);
  starts.push_back(concat(random_positive(ctx.g, r1), random_positive(ctx.g, r2)));

  std::optional<Candidate> best;
  int converged = 0;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    auto c = run_candidate(ctx, pb, starts[k], o, guard);
    if (!c) {
      warnings.push_back("candidate " + std::to_string(k) + " could not be rescaled");
      continue;
    }
    total += c->iterations;
    if (c->residual > o.tol) continue;
    ++converged;
    if (!nontrivial(ctx, c->x, pp.p, o.tol)) continue;
    if (!best || c->energy < best->energy) best = std::move(c);
  }
  if (!best) {
    if (converged > 0) throw NoFullyNontrivialCandidate("every converged candidate is semi-trivial");
    throw NoConvergence("cooperative candidates", total);
  }
  auto s = finish(ctx, pb, *best, pp, f1, f2, o, lv, Regime::cooperative, std::move(warnings),
                  total);
  s.report.diag_lp = diag_lp;
  return s;
}

inline SystemSolution decoupled(const Context& ctx, const ProblemParams& pp,
                                const CoefficientFamily& f1, const CoefficientFamily& f2,
                                const SolverOptions& o, const Levels& lv) {
  const PairProblem pb(ctx.g, pp, f1, f2, fiber_box(o));
  auto ro = refine_options(o);
  auto rr = newton_refine(pb, concat(lv.s1.z.values, lv.s2.z.values), ctx.kinv, ro);
  if (!rr.converged) throw NoConvergence("decoupled polish", rr.iterations);
  std::vector<std::string> warnings = lv.s1.warnings;
  warnings.insert(warnings.end(), lv.s2.warnings.begin(), lv.s2.warnings.end());
  const int its = lv.s1.iterations + lv.s2.iterations + rr.iterations;
  return finish(ctx, pb, Candidate{std::move(rr.x), rr.energy, rr.residual, rr.iterations}, pp,
                f1, f2, o, lv, Regime::decoupled, std::move(warnings), its);
}

inline SystemSolution dispatch(const Context& ctx, const ProblemParams& pp,
                               const CoefficientFamily& f1, const CoefficientFamily& f2,
                               const SolverOptions& o, const Levels& lv, const StatePair* warm) {
  if (pp.beta < 0.0) return competitive(ctx, pp, f1, f2, o, lv, warm);
  if (pp.beta > 0.0) return cooperative(ctx, pp, f1, f2, o, lv, warm);
  return decoupled(ctx, pp, f1, f2, o, lv);
}

}  // namespace detail

/// Least energy solution of the single equation for component i.
inline ScalarSolution scalar_ground_state(int i, const ProblemParams& pp,
                                          const CoefficientFamily& fam, const Grid& g,
                                          const SolverOptions& opts = {}) {
  validate(pp);
  if (i != 0 && i != 1) throw InvalidParams("component index must be 0 or 1");
  const detail::Context ctx(g);
  return detail::scalar_solution(ctx, i, pp, fam, opts);
}

inline SystemSolution competitive_least_energy(const ProblemParams& pp,
                                               const CoefficientFamily& f1,
                                               const CoefficientFamily& f2, const Grid& g,
                                               const SolverOptions& opts = {},
                                               const StatePair* warm = nullptr) {
  validate(pp);
  if (!(pp.beta < 0.0)) throw InvalidParams("competitive solver needs beta < 0");
  const detail::Context ctx(g);
  const auto lv = detail::levels(ctx, pp, f1, f2, opts);
  return detail::competitive(ctx, pp, f1, f2, opts, lv, warm);
}

inline SystemSolution cooperative_least_energy(const ProblemParams& pp,
                                               const CoefficientFamily& f1,
                                               const CoefficientFamily& f2, const Grid& g,
                                               const SolverOptions& opts = {},
                                               const StatePair* warm = nullptr) {
  validate(pp);
  if (!(pp.beta >= 0.0)) throw InvalidParams("cooperative solver needs beta >= 0");
  const detail::Context ctx(g);
  const auto lv = detail::levels(ctx, pp, f1, f2, opts);
  if (pp.beta == 0.0) return detail::decoupled(ctx, pp, f1, f2, opts, lv);
  return detail::cooperative(ctx, pp, f1, f2, opts, lv, warm);
}

/// Routes on the sign of beta.
inline SystemSolution solve_system(const ProblemParams& pp, const CoefficientFamily& f1,
                                   const CoefficientFamily& f2, const Grid& g,
                                   const SolverOptions& opts = {}) {
  validate(pp);
  const detail::Context ctx(g);
  const auto lv = detail::levels(ctx, pp, f1, f2, opts);
  return detail::dispatch(ctx, pp, f1, f2, opts, lv, nullptr);
}

struct SweepRow {
  double beta = 0.0;
  std::string status = "ok";
  SolveReport report;
  StatePair u;
  std::string message;
};

/// One row per beta, each solve warm-started from the previous solution.
/// Row failures are recorded in the status column and do not stop the sweep.
inline std::vector<SweepRow> beta_sweep(const std::vector<double>& betas, ProblemParams pp,
                                        const CoefficientFamily& f1,
                                        const CoefficientFamily& f2, const Grid& g,
                                        const SolverOptions& opts = {}) {
  for (double b : betas)
    if (!std::isfinite(b)) throw InvalidParams("sweep betas must be finite");
  validate(pp);
  const detail::Context ctx(g);
  std::optional<detail::Levels> lv;
  std::string level_status, level_message;
  try {
    lv = detail::levels(ctx, pp, f1, f2, opts);
  } catch (const NoConvergence& e) {
    level_status = "no_convergence";
    level_message = e.what();
  } catch (const InadmissibleLambda& e) {
    level_status = "inadmissible";
    level_message = e.what();
  }
  std::vector<SweepRow> rows;
  std::optional<StatePair> prev;
  for (double b : betas) {
    SweepRow row;
    row.beta = b;
    pp.beta = b;
    if (!lv) {
      row.status = level_status;
      row.message = level_message;
      rows.push_back(std::move(row));
      continue;
    }
    try {
      auto s = detail::dispatch(ctx, pp, f1, f2, opts, *lv, prev ? &*prev : nullptr);
      row.report = std::move(s.report);
      row.u = s.u;
      prev = std::move(s.u);
    } catch (const NoConvergence& e) {
      row.status = "no_convergence";
      row.message = e.what();
    } catch (const NoFullyNontrivialCandidate& e) {
      row.status = "semi_trivial";
      row.message = e.what();
    } catch (const InadmissibleLambda& e) {
      row.status = "inadmissible";
      row.message = e.what();
    } catch (const InvariantViolation& e) {
      row.status = "invariant_violation";
      row.message = e.what();
    }
    row.report.L1 = lv->s1.L;
    row.report.L2 = lv->s2.L;
    rows.push_back(std::move(row));
  }
  return rows;
}

/// Newton polish of any state. The zero state is returned as is; states with
/// a zero component are polished without the Nehari rescale.
inline std::pair<StatePair, double> refine_solution(const StatePair& u, const ProblemParams& pp,
                                                    const CoefficientFamily& f1,
                                                    const CoefficientFamily& f2, const Grid& g,
                                                    const SolverOptions& opts = {}) {
  validate(pp);
  require_same_grid(g, u);
  for (const auto* f : {&u.u1, &u.u2})
    for (double v : f->values)
      if (!std::isfinite(v)) throw InvalidParams("refine_solution needs a finite state");
  const detail::PairProblem pb(g, pp, f1, f2, detail::fiber_box(opts));
  const StiffnessInverse kinv(g);
  auto ro = detail::refine_options(opts);
  ro.rescale = any_nonzero(u.u1) && any_nonzero(u.u2);
  auto x0 = detail::pack(u);
  std::vector<double> d(x0.size());
  pb.gradient(x0, d);
  const double r0 = pb.residual(d);
  auto rr = detail::newton_refine(pb, x0, kinv, ro);
  if (rr.residual > r0) return {u, r0};
  return {pb.unpack(rr.x), rr.residual};
}

}  // namespace qlsys
