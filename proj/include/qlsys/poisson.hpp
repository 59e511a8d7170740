#pragma once

// Linear building blocks on the interior-node grid:
//  * the 5-point Dirichlet Laplacian (matrix-free) and a generic CG,
//  * the stiffness form K of the cell quadrature, u^T K u = int |grad u|^2,
//    inverted exactly by a separable sine transform. K^{-1} is the Riesz map
//    of the gradient inner product used as preconditioner by the solvers.

#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "qlsys/grid.hpp"

namespace qlsys {

inline double dot(std::span<const double> a, std::span<const double> b) noexcept {
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

/// y = (-Laplacian_h) x with the standard 5-point stencil and zero padding.
inline void apply_laplacian_5pt(const Grid& g, std::span<const double> x, std::span<double> y) {
  const int nx = g.nx(), ny = g.ny();
  const double cx = 1.0 / (g.hx() * g.hx());
  const double cy = 1.0 / (g.hy() * g.hy());
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int k = j * nx + i;
      const double c = x[k];
      const double l = i > 0 ? x[k - 1] : 0.0;
      const double r = i + 1 < nx ? x[k + 1] : 0.0;
      const double d = j > 0 ? x[k - nx] : 0.0;
      const double u = j + 1 < ny ? x[k + nx] : 0.0;
      y[k] = cx * (2.0 * c - l - r) + cy * (2.0 * c - d - u);
    }
  }
}

/// y = K x, assembled from the cell quadrature.
inline void apply_stiffness(const Grid& g, std::span<const double> x, std::span<double> y) {
  std::fill(y.begin(), y.end(), 0.0);
  const double vol = g.cell_volume();
  for (const Cell& c : g.cells()) {
    const auto s = g.sample(x, c);
    g.scatter(y, c, 0.0, vol * s.gx, vol * s.gy);
  }
}

struct CgResult {
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/// Conjugate gradients for an SPD operator given as apply(x, y): y = A x.
/// x holds the initial guess on entry.
template <class Apply>
CgResult conjugate_gradient(Apply&& apply, std::span<const double> b, std::span<double> x,
                            double rel_tol, int max_iter) {
  const std::size_t n = b.size();
  std::vector<double> r(n), p(n), ap(n);
  apply(std::span<const double>(x.data(), n), std::span<double>(ap));
  for (std::size_t k = 0; k < n; ++k) r[k] = b[k] - ap[k];
  const double bnorm = std::sqrt(dot(b, b));
  CgResult res;
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    res.converged = true;
    return res;
  }
  p = r;
  double rr = dot(r, r);
  for (int it = 0; it < max_iter; ++it) {
    if (std::sqrt(rr) <= rel_tol * bnorm) {
      res.converged = true;
      res.iterations = it;
      res.relative_residual = std::sqrt(rr) / bnorm;
      return res;
    }
    apply(std::span<const double>(p), std::span<double>(ap));
    const double alpha = rr / dot(p, ap);
    for (std::size_t k = 0; k < n; ++k) {
      x[k] += alpha * p[k];
      r[k] -= alpha * ap[k];
    }
    const double rr_new = dot(r, r);
    const double beta = rr_new / rr;
    rr = rr_new;
    for (std::size_t k = 0; k < n; ++k) p[k] = r[k] + beta * p[k];
  }
  res.iterations = max_iter;
  res.relative_residual = std::sqrt(rr) / bnorm;
  res.converged = res.relative_residual <= rel_tol;
  return res;
}

/// Exact inverse of the quadrature stiffness K by a 2-D discrete sine transform.
///
/// K = hx hy (Ay'Ay (x) Dx'Dx + Dy'Dy (x) Ax'Ax) with D the cell difference and
/// A the cell average; both 1-D forms are diagonal in the sine basis, with
/// eigenvalues 4/h^2 sin^2(theta/2) and cos^2(theta/2).
class StiffnessInverse {
 public:
  explicit StiffnessInverse(const Grid& g) : nx_(g.nx()), ny_(g.ny()) {
    sx_ = sine_matrix(nx_);
    sy_ = sine_matrix(ny_);
    eig_.resize(static_cast<std::size_t>(nx_) * ny_);
    const double pi = std::numbers::pi;
    for (int ky = 1; ky <= ny_; ++ky) {
      const double ty = pi * ky / (ny_ + 1);
      const double dy = 4.0 / (g.hy() * g.hy()) * std::pow(std::sin(0.5 * ty), 2);
      const double ay = std::pow(std::cos(0.5 * ty), 2);
      for (int kx = 1; kx <= nx_; ++kx) {
        const double tx = pi * kx / (nx_ + 1);
        const double dx = 4.0 / (g.hx() * g.hx()) * std::pow(std::sin(0.5 * tx), 2);
        const double ax = std::pow(std::cos(0.5 * tx), 2);
        eig_[(ky - 1) * nx_ + (kx - 1)] = g.cell_volume() * (ay * dx + dy * ax);
      }
    }
    scale_ = (2.0 / (nx_ + 1)) * (2.0 / (ny_ + 1));
  }

  /// w = K^{-1} r.
  void solve(std::span<const double> r, std::span<double> w) const {
    std::vector<double> t(r.begin(), r.end());
    transform(t);
    for (std::size_t k = 0; k < t.size(); ++k) t[k] *= scale_ / eig_[k];
    transform(t);
    std::copy(t.begin(), t.end(), w.begin());
  }

  std::vector<double> solve(std::span<const double> r) const {
    std::vector<double> w(r.size());
    solve(r, w);
    return w;
  }

  /// Smallest generalized eigenvalue of (K, M): the quadrature Rayleigh minimum.
  static double quadrature_mu1(const Grid& g) {
    const double pi = std::numbers::pi;
    return 4.0 / (g.hx() * g.hx()) * std::pow(std::tan(0.5 * pi * g.hx() / g.lx()), 2) +
           4.0 / (g.hy() * g.hy()) * std::pow(std::tan(0.5 * pi * g.hy() / g.ly()), 2);
  }

 private:
  static std::vector<double> sine_matrix(int n) {
    std::vector<double> s(static_cast<std::size_t>(n) * n);
    for (int a = 1; a <= n; ++a)
      for (int k = 1; k <= n; ++k)
        s[(a - 1) * n + (k - 1)] = std::sin(std::numbers::pi * a * k / (n + 1));
    return s;
  }

  // t <- Sy t Sx (both sine matrices symmetric), t stored row-major ny x nx.
  void transform(std::vector<double>& t) const {
    std::vector<double> tmp(t.size(), 0.0);
    for (int j = 0; j < ny_; ++j) {
      const double* row = &t[static_cast<std::size_t>(j) * nx_];
      double* out = &tmp[static_cast<std::size_t>(j) * nx_];
      for (int i = 0; i < nx_; ++i) {
        const double v = row[i];
        if (v == 0.0) continue;
        const double* srow = &sx_[static_cast<std::size_t>(i) * nx_];
        for (int k = 0; k < nx_; ++k) out[k] += v * srow[k];
      }
    }
    std::fill(t.begin(), t.end(), 0.0);
    for (int j = 0; j < ny_; ++j) {
      const double* srow = &sy_[static_cast<std::size_t>(j) * ny_];
      const double* in = &tmp[static_cast<std::size_t>(j) * nx_];
      for (int k = 0; k < ny_; ++k) {
        const double w = srow[k];
        double* out = &t[static_cast<std::size_t>(k) * nx_];
        for (int i = 0; i < nx_; ++i) out[i] += w * in[i];
      }
    }
  }

  int nx_, ny_;
  std::vector<double> sx_, sy_, eig_;
  double scale_ = 1.0;
};

}  // namespace qlsys
