#pragma once

#include <cmath>
#include <span>
#include <vector>

namespace qlsys {

struct GmresResult {
  int iterations = 0;
  double relative_residual = 1.0;
  bool converged = false;
};

/// Restarted GMRES with right preconditioning: solves A x = b using
/// apply(v, Av) and precond(v, Pv), x holding the initial guess on entry.
template <class Apply, class Precond>
GmresResult gmres(Apply&& apply, Precond&& precond, std::span<const double> b,
                  std::span<double> x, double rel_tol, int restart, int max_iter) {
  const std::size_t n = b.size();
  auto norm = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double e : v) s += e * e;
    return std::sqrt(s);
  };
  double bnorm = 0.0;
  for (double e : b) bnorm += e * e;
  bnorm = std::sqrt(bnorm);
  GmresResult res;
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    res.converged = true;
    res.relative_residual = 0.0;
    return res;
  }

  std::vector<std::vector<double>> V(restart + 1, std::vector<double>(n));
  std::vector<std::vector<double>> Z(restart, std::vector<double>(n));
  std::vector<double> H(static_cast<std::size_t>(restart + 1) * restart);
  std::vector<double> cs(restart), sn(restart), s(restart + 1), y(restart);
  std::vector<double> r(n), w(n);
  auto h = [&](int i, int j) -> double& { return H[static_cast<std::size_t>(i) * restart + j]; };

  int total = 0;
  while (total < max_iter) {
    apply(std::span<const double>(x.data(), n), std::span<double>(w));
    for (std::size_t k = 0; k < n; ++k) r[k] = b[k] - w[k];
    double beta = norm(r);
    res.relative_residual = beta / bnorm;
    if (res.relative_residual <= rel_tol) {
      res.converged = true;
      break;
    }
    for (std::size_t k = 0; k < n; ++k) V[0][k] = r[k] / beta;
    std::fill(s.begin(), s.end(), 0.0);
    s[0] = beta;
    int j = 0;
    for (; j < restart && total < max_iter; ++j, ++total) {
      precond(std::span<const double>(V[j]), std::span<double>(Z[j]));
      apply(std::span<const double>(Z[j]), std::span<double>(w));
      for (int i = 0; i <= j; ++i) {
        double d = 0.0;
        for (std::size_t k = 0; k < n; ++k) d += w[k] * V[i][k];
        h(i, j) = d;
        for (std::size_t k = 0; k < n; ++k) w[k] -= d * V[i][k];
      }
      const double hn = norm(w);
      h(j + 1, j) = hn;
      if (hn > 0.0)
        for (std::size_t k = 0; k < n; ++k) V[j + 1][k] = w[k] / hn;
      for (int i = 0; i < j; ++i) {
        const double t = cs[i] * h(i, j) + sn[i] * h(i + 1, j);
        h(i + 1, j) = -sn[i] * h(i, j) + cs[i] * h(i + 1, j);
        h(i, j) = t;
      }
      const double denom = std::hypot(h(j, j), h(j + 1, j));
      cs[j] = denom == 0.0 ? 1.0 : h(j, j) / denom;
      sn[j] = denom == 0.0 ? 0.0 : h(j + 1, j) / denom;
      h(j, j) = denom;
      h(j + 1, j) = 0.0;
      s[j + 1] = -sn[j] * s[j];
      s[j] = cs[j] * s[j];
      res.relative_residual = std::fabs(s[j + 1]) / bnorm;
      if (res.relative_residual <= rel_tol || hn == 0.0) {
        ++j;
        ++total;
        break;
      }
    }
    // back substitution and update x += Z y
    for (int i = j - 1; i >= 0; --i) {
      double acc = s[i];
      for (int k = i + 1; k < j; ++k) acc -= h(i, k) * y[k];
      y[i] = acc / h(i, i);
    }
    for (int i = 0; i < j; ++i)
      for (std::size_t k = 0; k < n; ++k) x[k] += y[i] * Z[i][k];
    if (res.relative_residual <= rel_tol) {
      res.converged = true;
      break;
    }
  }
  res.iterations = total;
  return res;
}

}  // namespace qlsys
